//! Penalty continuation around a projected pattern search.
//!
//! The inner solver minimizes `Φ(z) = f(z) + α·r(z)^γ` over a box. Each
//! iteration polls the signed coordinate directions in fixed order, then the
//! model's structured candidates (tangent directions of the active affine
//! piece of the feasible set and least-squares restorations onto it), then a
//! square-root-penalty gradient step when one exists. The first strict
//! improvement is accepted; if nothing improves the step is halved.
//!
//! The outer loop raises `α` geometrically until the residual drops below
//! `eps_feas`, or stops early when the residual has stalled at a point that
//! is coordinatewise stationary for `Φ` (an infeasible penalty minimizer).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KktPoint, MpecProblem, ScalarPairProblem};
use crate::residuals::{
    grad_penalized_sqrt, penalty_power, residual_generic, ResidualKind, ResidualSpec,
};
use crate::scalar::{power_slope, DirJet, Real};

/// Anything the pattern search can minimize a penalized objective over.
pub trait PenaltyModel {
    fn dim(&self) -> usize;

    fn bounds(&self) -> Vec<(f64, f64)>;

    fn objective_at<S: Real>(&self, z: &[S]) -> S;

    fn residual_at<S: Real>(&self, z: &[S], spec: &ResidualSpec) -> S;

    /// Start point inside the box, from an optional user-supplied prefix.
    fn initial_point(&self, start: Option<&[f64]>) -> Result<Vec<f64>>;

    fn to_kkt_point(&self, z: &[f64]) -> KktPoint;

    /// Unit search directions beyond the coordinate axes.
    fn tangent_directions(&self, _z: &[f64], _spec: &ResidualSpec, _step: f64) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Candidate points obtained by projecting onto nearby feasible pieces.
    fn restorations(&self, _z: &[f64], _spec: &ResidualSpec, _step: f64) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Gradient of the square-root penalty, where it exists.
    fn sqrt_gradient(&self, _z: &[f64], _alpha: f64) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    FeasibleMinimizer,
    InfeasiblePenaltyStationary,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub alpha0: f64,
    pub growth: f64,
    pub eps_feas: f64,
    pub eps_stat: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub residual: ResidualSpec,
    pub seed: u64,
    /// Keep `α = alpha0` in every outer round.
    pub fixed_alpha: bool,
    /// Required residual reduction factor per outer round.
    pub residual_decrease: f64,
    pub initial_step: f64,
    pub inner_tol: f64,
    pub start: Option<Vec<f64>>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            alpha0: 1.0,
            growth: 10.0,
            eps_feas: 1e-8,
            eps_stat: 1e-6,
            max_outer: 12,
            max_inner: 5000,
            residual: ResidualSpec::default(),
            seed: 0,
            fixed_alpha: false,
            residual_decrease: 0.5,
            initial_step: 0.25,
            inner_tol: 1e-10,
            start: None,
        }
    }
}

impl PenaltyConfig {
    pub fn gamma(&self) -> f64 {
        self.residual.gamma
    }

    pub fn validate(&self) -> Result<()> {
        self.residual.validate()?;
        let bad = |what: &str| Err(Error::InvalidValue(what.to_string()));
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive");
        }
        if !(self.growth > 1.0) {
            return bad("growth must exceed 1");
        }
        if !(self.eps_feas > 0.0 && self.eps_stat > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.residual_decrease > 0.0 && self.residual_decrease < 1.0) {
            return bad("residual_decrease must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.inner_tol > 0.0) {
            return bad("initial_step and inner_tol must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_point: KktPoint,
    pub final_residual: f64,
    pub final_objective: f64,
    pub final_penalized: f64,
    pub final_alpha: f64,
    pub alpha_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub penalized_history: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub classification: Classification,
    pub stationarity_measure: f64,
    pub residual_spec: ResidualSpec,
}

#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub final_step: f64,
    /// `Φ` at the start and after every accepted move.
    pub values: Vec<f64>,
    /// Accepted iterates, when requested.
    pub points: Vec<Vec<f64>>,
}

fn clamp_into(z: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in z.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn in_box(z: &[f64], bounds: &[(f64, f64)]) -> bool {
    z.iter()
        .zip(bounds)
        .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
}

/// `f(z) + α·r(z)^γ`.
pub fn penalized_value<P: PenaltyModel>(
    model: &P,
    z: &[f64],
    alpha: f64,
    spec: &ResidualSpec,
) -> f64 {
    let f = model.objective_at(z);
    if alpha == 0.0 {
        return f;
    }
    f + alpha * penalty_power(model.residual_at(z, spec), spec.gamma)
}

fn improves(candidate: f64, current: f64) -> bool {
    candidate < current - f64::EPSILON * current.abs().max(1.0)
}

/// Budget and step controls for one inner solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerOptions {
    pub budget: usize,
    pub tol: f64,
    pub initial_step: f64,
    /// Keep every accepted iterate in [`InnerOutcome::points`].
    pub record_points: bool,
}

impl InnerOptions {
    pub fn from_config(config: &PenaltyConfig) -> Self {
        Self {
            budget: config.max_inner,
            tol: config.inner_tol,
            initial_step: config.initial_step,
            record_points: false,
        }
    }
}

/// Projected pattern search on `Φ` from `z0`; never returns a worse point.
pub fn minimize_penalized<P: PenaltyModel>(
    model: &P,
    alpha: f64,
    spec: &ResidualSpec,
    z0: &[f64],
    opts: InnerOptions,
) -> InnerOutcome {
    let InnerOptions {
        budget,
        tol,
        initial_step,
        record_points,
    } = opts;
    let bounds = model.bounds();
    let d = model.dim();
    let mut z = z0.to_vec();
    clamp_into(&mut z, &bounds);
    let phi_of = |p: &[f64]| penalized_value(model, p, alpha, spec);
    let mut phi = phi_of(&z);
    let mut h = initial_step;
    let mut values = vec![phi];
    let mut points = if record_points {
        vec![z.clone()]
    } else {
        Vec::new()
    };
    let use_gradient = alpha > 0.0 && spec.gamma == 0.5;

    let mut iterations = 0;
    while iterations < budget && h >= tol {
        iterations += 1;
        let mut accepted: Option<(Vec<f64>, f64)> = None;

        'poll: {
            for j in 0..d {
                for s in [1.0, -1.0] {
                    let mut c = z.clone();
                    c[j] = (c[j] + s * h).clamp(bounds[j].0, bounds[j].1);
                    if c[j] == z[j] {
                        continue;
                    }
                    let v = phi_of(&c);
                    if improves(v, phi) {
                        accepted = Some((c, v));
                        break 'poll;
                    }
                }
            }
            if alpha == 0.0 {
                break 'poll;
            }
            for dir in model.tangent_directions(&z, spec, h) {
                let mut c: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
                clamp_into(&mut c, &bounds);
                let v = phi_of(&c);
                if improves(v, phi) {
                    accepted = Some((c, v));
                    break 'poll;
                }
            }
            for c in model.restorations(&z, spec, h) {
                let v = phi_of(&c);
                if improves(v, phi) {
                    accepted = Some((c, v));
                    break 'poll;
                }
            }
            if use_gradient {
                if let Some(g) = model.sqrt_gradient(&z, alpha) {
                    let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if gn > 0.0 {
                        let mut c: Vec<f64> =
                            z.iter().zip(&g).map(|(a, b)| a - h * b / gn).collect();
                        clamp_into(&mut c, &bounds);
                        let v = phi_of(&c);
                        if improves(v, phi) {
                            accepted = Some((c, v));
                        }
                    }
                }
            }
        }

        match accepted {
            Some((c, v)) => {
                debug_assert!(in_box(&c, &bounds));
                z = c;
                phi = v;
                values.push(phi);
                if record_points {
                    points.push(z.clone());
                }
            }
            None => h *= 0.5,
        }
    }

    if use_gradient && iterations < budget {
        iterations += gradient_refinement(
            model,
            alpha,
            spec,
            &mut z,
            &mut phi,
            tol,
            initial_step,
            budget - iterations,
            &mut values,
            &mut points,
            record_points,
        );
    }

    InnerOutcome {
        z,
        iterations,
        final_step: h,
        values,
        points,
    }
}

/// Projected gradient with backtracking on the square-root penalty, applied
/// while the gradient exists.
#[allow(clippy::too_many_arguments)]
fn gradient_refinement<P: PenaltyModel>(
    model: &P,
    alpha: f64,
    spec: &ResidualSpec,
    z: &mut Vec<f64>,
    phi: &mut f64,
    tol: f64,
    max_step: f64,
    budget: usize,
    values: &mut Vec<f64>,
    points: &mut Vec<Vec<f64>>,
    record_points: bool,
) -> usize {
    let bounds = model.bounds();
    let mut used = 0;
    while used < budget.min(100) {
        used += 1;
        let Some(g) = model.sqrt_gradient(z, alpha) else {
            break;
        };
        let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut step = max_step;
        let mut moved = false;
        while step >= tol {
            let mut c: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b / gn).collect();
            clamp_into(&mut c, &bounds);
            let v = penalized_value(model, &c, alpha, spec);
            if improves(v, *phi) {
                *z = c;
                *phi = v;
                values.push(v);
                if record_points {
                    points.push(z.clone());
                }
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    used
}

/// Most negative box-feasible one-sided directional derivative of `Φ` over
/// the signed coordinate directions, reported as a nonnegative number.
pub fn stationarity_measure<P: PenaltyModel>(
    model: &P,
    z: &[f64],
    alpha: f64,
    spec: &ResidualSpec,
) -> f64 {
    let bounds = model.bounds();
    let mut worst: f64 = 0.0;
    for j in 0..model.dim() {
        for s in [1.0, -1.0] {
            if (s > 0.0 && z[j] >= bounds[j].1) || (s < 0.0 && z[j] <= bounds[j].0) {
                continue;
            }
            let zj: Vec<DirJet> = z
                .iter()
                .enumerate()
                .map(|(k, &v)| DirJet::seed(v, if k == j { s } else { 0.0 }))
                .collect();
            let f = model.objective_at(&zj);
            let mut slope = f.d1;
            if alpha > 0.0 {
                let r = model.residual_at(&zj, spec);
                slope += alpha * power_slope(r, spec.gamma);
            }
            if slope.is_nan() {
                continue;
            }
            worst = worst.min(slope);
        }
    }
    if worst < 0.0 {
        -worst
    } else {
        0.0
    }
}

pub fn classify(residual: f64, stationarity: f64, eps_feas: f64, eps_stat: f64) -> Classification {
    if residual <= eps_feas {
        Classification::FeasibleMinimizer
    } else if stationarity <= eps_stat {
        Classification::InfeasiblePenaltyStationary
    } else {
        Classification::IterationLimit
    }
}

/// Post-hoc classification of a finished report.
pub fn classify_result(report: &SolveReport, eps_feas: f64, eps_stat: f64) -> Classification {
    classify(
        report.final_residual,
        report.stationarity_measure,
        eps_feas,
        eps_stat,
    )
}

/// Runs the continuation loop from `z0`.
pub fn continuation_from<P: PenaltyModel>(
    model: &P,
    config: &PenaltyConfig,
    z0: Vec<f64>,
) -> Result<SolveReport> {
    config.validate()?;
    let spec = config.residual;
    let mut z = z0;
    let mut alpha = config.alpha0;
    let mut r_prev = model.residual_at(&z, &spec);

    let mut report = SolveReport {
        final_point: model.to_kkt_point(&z),
        final_residual: r_prev,
        final_objective: model.objective_at(&z),
        final_penalized: penalized_value(model, &z, alpha, &spec),
        final_alpha: alpha,
        alpha_history: Vec::new(),
        residual_history: Vec::new(),
        objective_history: Vec::new(),
        penalized_history: Vec::new(),
        inner_iterations: Vec::new(),
        classification: Classification::IterationLimit,
        stationarity_measure: f64::INFINITY,
        residual_spec: spec,
    };

    for round in 0..config.max_outer {
        let inner = minimize_penalized(model, alpha, &spec, &z, InnerOptions::from_config(config));
        z = inner.z;
        let r = model.residual_at(&z, &spec);
        let f = model.objective_at(&z);
        let phi = penalized_value(model, &z, alpha, &spec);
        let stat = stationarity_measure(model, &z, alpha, &spec);

        report.alpha_history.push(alpha);
        report.residual_history.push(r);
        report.objective_history.push(f);
        report.penalized_history.push(phi);
        report.inner_iterations.push(inner.iterations);
        report.final_point = model.to_kkt_point(&z);
        report.final_residual = r;
        report.final_objective = f;
        report.final_penalized = phi;
        report.final_alpha = alpha;
        report.stationarity_measure = stat;

        if r <= config.eps_feas {
            report.classification = Classification::FeasibleMinimizer;
            return Ok(report);
        }
        let stalled = !(r <= config.residual_decrease * r_prev);
        if stalled && stat <= config.eps_stat {
            report.classification = Classification::InfeasiblePenaltyStationary;
            return Ok(report);
        }
        r_prev = r;
        if !config.fixed_alpha && round + 1 < config.max_outer {
            alpha *= config.growth;
        }
    }
    report.classification = Classification::IterationLimit;
    Ok(report)
}

/// Continuation from `config.start` (or the model's default start).
pub fn run_continuation<P: PenaltyModel>(model: &P, config: &PenaltyConfig) -> Result<SolveReport> {
    let z0 = model.initial_point(config.start.as_deref())?;
    continuation_from(model, config, z0)
}

/// Penalty continuation on an LCP-constrained MPEC.
pub fn penalty_continuation(problem: &MpecProblem, config: &PenaltyConfig) -> Result<SolveReport> {
    run_continuation(problem, config)
}

/// Pattern search at fixed `α` on an MPEC, from a `KktPoint`.
pub fn inner_minimize(
    problem: &MpecProblem,
    alpha: f64,
    spec: &ResidualSpec,
    z0: &KktPoint,
    budget: usize,
    tol: f64,
) -> Result<KktPoint> {
    z0.check_dims(problem)?;
    spec.validate()?;
    let start = z0.flatten();
    if !in_box(&start, &problem.variable_bounds()) {
        return Err(Error::InvalidValue(
            "start point lies outside Z × [0, c]^m".into(),
        ));
    }
    let opts = InnerOptions {
        budget,
        tol,
        initial_step: PenaltyConfig::default().initial_step,
        record_points: false,
    };
    let out = minimize_penalized(problem, alpha, spec, &start, opts);
    Ok(problem.to_kkt_point(&out.z))
}

/// Coordinatewise stationarity of `Φ` at an MPEC point.
pub fn check_stationarity(
    problem: &MpecProblem,
    z: &KktPoint,
    alpha: f64,
    spec: &ResidualSpec,
) -> Result<f64> {
    z.check_dims(problem)?;
    Ok(stationarity_measure(problem, &z.flatten(), alpha, spec))
}

/// `count` continuation runs from starts drawn uniformly in the box with
/// `config.seed`.
pub fn multi_start<P: PenaltyModel>(
    model: &P,
    config: &PenaltyConfig,
    count: usize,
) -> Result<Vec<SolveReport>> {
    let bounds = model.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect()
        })
        .collect();
    starts
        .into_iter()
        .map(|z0| continuation_from(model, config, z0))
        .collect()
}

// ---------------------------------------------------------------------------
// LCP-constrained MPEC

impl PenaltyModel for MpecProblem {
    fn dim(&self) -> usize {
        MpecProblem::dim(self)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.variable_bounds()
    }

    fn objective_at<S: Real>(&self, z: &[S]) -> S {
        let (x, y, _) = self.split(z);
        self.objective().value(x, y)
    }

    fn residual_at<S: Real>(&self, z: &[S], spec: &ResidualSpec) -> S {
        let (x, y, l) = self.split(z);
        residual_generic(self, x, y, l, spec)
    }

    fn initial_point(&self, start: Option<&[f64]>) -> Result<Vec<f64>> {
        let (n, m) = (self.n(), self.m());
        let bounds = self.variable_bounds();
        let mut z = match start {
            None => {
                let x: Vec<f64> = self
                    .x_box()
                    .iter()
                    .map(|&(lo, hi)| 0.5 * (lo + hi))
                    .collect();
                self.warm_start(&x)
            }
            Some(s) if s.len() == n => self.warm_start(s),
            Some(s) if s.len() == n + 2 * m => s.to_vec(),
            Some(s) => return Err(Error::dims("start point (n or n + 2m entries)", n, s.len())),
        };
        clamp_into(&mut z, &bounds);
        Ok(z)
    }

    fn to_kkt_point(&self, z: &[f64]) -> KktPoint {
        KktPoint::from_flat(self.n(), self.m(), z)
    }

    fn tangent_directions(&self, z: &[f64], spec: &ResidualSpec, step: f64) -> Vec<Vec<f64>> {
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for piece in self.active_pieces(z, spec, step) {
            for d in piece.tangent_directions() {
                for s in [1.0, -1.0] {
                    let cand: Vec<f64> = d.iter().map(|v| s * v).collect();
                    if !dirs.iter().any(|e| approx_same(e, &cand)) {
                        dirs.push(cand);
                    }
                }
            }
        }
        dirs
    }

    fn restorations(&self, z: &[f64], spec: &ResidualSpec, step: f64) -> Vec<Vec<f64>> {
        let bounds = self.variable_bounds();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for piece in self.active_pieces(z, spec, step) {
            if let Some(mut c) = piece.restore(z) {
                clamp_into(&mut c, &bounds);
                if !approx_same(&c, z) && !out.iter().any(|e| approx_same(e, &c)) {
                    out.push(c);
                }
            }
        }
        out
    }

    fn sqrt_gradient(&self, z: &[f64], alpha: f64) -> Option<Vec<f64>> {
        grad_penalized_sqrt(self, &self.to_kkt_point(z), alpha).ok()
    }
}

fn approx_same(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Affine piece `{z : J·z = b}` of the one-level feasible set.
struct AffinePiece {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    dim: usize,
}

impl AffinePiece {
    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.dim, |i, j| self.rows[i][j])
    }

    /// Unit projections of the coordinate axes onto the null space of `J`,
    /// skipping those that coincide with an axis.
    fn tangent_directions(&self) -> Vec<Vec<f64>> {
        if self.rows.is_empty() {
            return Vec::new();
        }
        let svd = self.matrix().svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let smax = svd.singular_values.max();
        let mut proj = DMatrix::<f64>::identity(self.dim, self.dim);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > 1e-10 * smax.max(1.0) {
                let v = v_t.row(k).transpose();
                proj -= &v * v.transpose();
            }
        }
        let mut out = Vec::new();
        for j in 0..self.dim {
            let col = proj.column(j);
            let norm = col.norm();
            if norm < 1e-8 {
                continue;
            }
            let unit: Vec<f64> = col.iter().map(|v| v / norm).collect();
            if unit[j].abs() > 1.0 - 1e-12 {
                continue;
            }
            out.push(unit);
        }
        out
    }

    /// Minimum-norm correction onto the piece.
    fn restore(&self, z: &[f64]) -> Option<Vec<f64>> {
        if self.rows.is_empty() {
            return None;
        }
        let j = self.matrix();
        let zv = DVector::from_column_slice(z);
        let res = &j * &zv - DVector::from_column_slice(&self.rhs);
        if res.amax() <= 1e-15 {
            return None;
        }
        let svd = j.svd(true, true);
        let corr = svd.solve(&res, 1e-10).ok()?;
        Some((zv - corr).iter().copied().collect())
    }
}

impl MpecProblem {
    fn warm_start(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        let y = vec![0.0; m];
        let lambda: Vec<f64> = self
            .equilibrium_map_generic(x, &y)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        x.iter().copied().chain(y).chain(lambda).collect()
    }

    fn unit_row(&self, j: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        r[j] = 1.0;
        r
    }

    /// Row of `Fᵢ(x, y)` (optionally `− λᵢ`) with its right-hand side.
    fn map_row(&self, i: usize, with_lambda: bool) -> (Vec<f64>, f64) {
        let (n, m) = (self.n(), self.m());
        let mut r = vec![0.0; self.dim()];
        for (j, v) in r[..n].iter_mut().enumerate() {
            *v = self.qmap().matrix()[(i, j)];
        }
        for (j, v) in r[n..n + m].iter_mut().enumerate() {
            *v = self.lcp_matrix()[(i, j)];
        }
        if with_lambda {
            r[n + m + i] = -1.0;
        }
        (r, -self.qmap().offset()[i])
    }

    /// Affine pieces near `z`: the stationarity rows (KKT residual only),
    /// one zero per complementarity pair (both choices for near-ties, plus
    /// the relaxed piece with no pair constraint), with and without the
    /// active bound constraints.
    fn active_pieces(&self, z: &[f64], spec: &ResidualSpec, step: f64) -> Vec<AffinePiece> {
        const MAX_TIES: usize = 4;
        let (n, m) = (self.n(), self.m());
        let d = self.dim();
        let (x, y, lam) = self.split(z);
        let kkt = spec.kind == ResidualKind::KktComposite;

        let mut base_rows = Vec::new();
        let mut base_rhs = Vec::new();
        if kkt {
            for i in 0..m {
                let (r, b) = self.map_row(i, true);
                base_rows.push(r);
                base_rhs.push(b);
            }
        }

        // Pair i: (first, second) values and their zero rows.
        let w = self.equilibrium_map_generic(x, y);
        let mut pairs = Vec::with_capacity(m);
        for i in 0..m {
            let (a, row_a) = (y[i], (self.unit_row(n + i), 0.0));
            let (b, row_b) = if kkt {
                (lam[i], (self.unit_row(n + m + i), 0.0))
            } else {
                (w[i], self.map_row(i, false))
            };
            pairs.push((a, b, row_a, row_b));
        }
        let mut ties: Vec<usize> = (0..m)
            .filter(|&i| pairs[i].0.abs().max(pairs[i].1.abs()) <= 10.0 * step)
            .collect();
        ties.sort_by(|&i, &j| {
            let key = |k: usize| pairs[k].0.abs().max(pairs[k].1.abs());
            key(i).total_cmp(&key(j))
        });
        ties.truncate(MAX_TIES);

        let bounds = self.variable_bounds();
        let mut bound_rows = Vec::new();
        let mut bound_rhs = Vec::new();
        for j in 0..d {
            let (lo, hi) = bounds[j];
            // Lower bounds of y and λ are the complementarity zeros themselves.
            let check_lo = j < n;
            let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if check_lo && (z[j] - lo).abs() <= tol {
                bound_rows.push(self.unit_row(j));
                bound_rhs.push(lo);
            } else if (hi - z[j]).abs() <= tol {
                bound_rows.push(self.unit_row(j));
                bound_rhs.push(hi);
            }
        }

        let mut choices: Vec<Option<Vec<bool>>> = vec![None];
        for mask in 0..(1usize << ties.len()) {
            let pick: Vec<bool> = (0..m)
                .map(|i| match ties.iter().position(|&t| t == i) {
                    Some(k) => mask & (1 << k) != 0,
                    None => pairs[i].0.abs() > pairs[i].1.abs(),
                })
                .collect();
            choices.push(Some(pick));
        }

        let mut pieces = Vec::new();
        for choice in &choices {
            let mut rows = base_rows.clone();
            let mut rhs = base_rhs.clone();
            if let Some(pick) = choice {
                for (i, &second) in pick.iter().enumerate() {
                    let (r, b) = if second { &pairs[i].3 } else { &pairs[i].2 };
                    rows.push(r.clone());
                    rhs.push(*b);
                }
            }
            if !bound_rows.is_empty() {
                let mut rb = rows.clone();
                let mut hb = rhs.clone();
                rb.extend(bound_rows.iter().cloned());
                hb.extend(bound_rhs.iter().copied());
                pieces.push(AffinePiece {
                    rows: rb,
                    rhs: hb,
                    dim: d,
                });
            }
            pieces.push(AffinePiece { rows, rhs, dim: d });
        }
        pieces
    }
}

// ---------------------------------------------------------------------------
// One-dimensional complementarity toy

impl PenaltyModel for ScalarPairProblem {
    fn dim(&self) -> usize {
        1
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(self.t_box[0], self.t_box[1])]
    }

    fn objective_at<S: Real>(&self, z: &[S]) -> S {
        ScalarPairProblem::quad(&self.objective, z[0])
    }

    /// `|min(u(t), v(t))|`; the residual kind does not apply.
    fn residual_at<S: Real>(&self, z: &[S], _spec: &ResidualSpec) -> S {
        self.residual_generic(z[0])
    }

    fn initial_point(&self, start: Option<&[f64]>) -> Result<Vec<f64>> {
        let t = match start {
            None => 0.5 * (self.t_box[0] + self.t_box[1]),
            Some([t]) => *t,
            Some(s) => return Err(Error::dims("start point", 1, s.len())),
        };
        Ok(vec![t.clamp(self.t_box[0], self.t_box[1])])
    }

    fn to_kkt_point(&self, z: &[f64]) -> KktPoint {
        KktPoint::new(z.to_vec(), Vec::new(), Vec::new())
    }
}
