//! Complementarity residuals, penalized objectives and their derivatives.
//!
//! All residuals are nonnegative and vanish exactly on the feasible set of
//! the one-level reformulation (or on the LCP solution set for the `(x, y)`
//! residuals). The KKT composite is
//!
//! ```text
//! r(x, y, λ) = ‖F(x, y) − λ‖ + Σ [−yᵢ]₊ + Σ [−λᵢ]₊ + Σ |λᵢ yᵢ|
//! ```
//!
//! with `F(x, y) = M·y + q(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KktPoint, MpecProblem};
use crate::scalar::Real;

/// Below this value of the squared-stationarity residual the square-root
/// penalty gradient is reported as unavailable.
pub const KINK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    /// `‖min(y, F(x, y))‖`.
    MinResidual,
    /// `|yᵀF(x, y)| + Σ[−yᵢ]₊ + Σ[−Fᵢ]₊`.
    ProductResidual,
    /// Stationarity + primal/dual violation + complementarity in `(x, y, λ)`.
    KktComposite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

/// How the stationarity block of the KKT composite enters the residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationarityForm {
    /// `‖F − λ‖` in the selected norm.
    Norm,
    /// `‖F − λ‖₂²`, the differentiable form used by [`grad_penalized_sqrt`].
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub kind: ResidualKind,
    pub norm: Norm,
    pub gamma: f64,
    pub stationarity: StationarityForm,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        ResidualSpec {
            kind: ResidualKind::KktComposite,
            norm: Norm::L2,
            gamma: 0.5,
            stationarity: StationarityForm::Norm,
        }
    }
}

impl ResidualSpec {
    pub fn new(kind: ResidualKind, norm: Norm, gamma: f64) -> Result<Self> {
        let spec = ResidualSpec {
            kind,
            norm,
            gamma,
            stationarity: StationarityForm::Norm,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_stationarity(mut self, form: StationarityForm) -> Self {
        self.stationarity = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

pub(crate) fn norm_of<S: Real>(v: &[S], norm: Norm) -> S {
    match norm {
        Norm::L1 => v.iter().fold(S::zero(), |acc, &a| acc + a.abs_val()),
        Norm::L2 => sum_sq(v).root(),
    }
}

fn sum_sq<S: Real>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &a| acc + a * a)
}

fn same_len(y: &[f64], w: &[f64]) -> Result<()> {
    if y.len() != w.len() {
        return Err(Error::dims("complementarity pair", y.len(), w.len()));
    }
    Ok(())
}

/// `‖min(y, w)‖` with componentwise `min`.
pub fn min_residual(y: &[f64], w: &[f64], norm: Norm) -> Result<f64> {
    same_len(y, w)?;
    Ok(min_residual_generic(y, w, norm))
}

pub(crate) fn min_residual_generic<S: Real>(y: &[S], w: &[S], norm: Norm) -> S {
    let mins: Vec<S> = y.iter().zip(w).map(|(&a, &b)| a.min_of(b)).collect();
    norm_of(&mins, norm)
}

/// Signed `yᵀw`; nonnegative when both arguments are.
pub fn product_residual(y: &[f64], w: &[f64]) -> Result<f64> {
    same_len(y, w)?;
    Ok(y.iter().zip(w).map(|(a, b)| a * b).sum())
}

pub(crate) fn product_penalty_generic<S: Real>(y: &[S], w: &[S]) -> S {
    let dot = y.iter().zip(w).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    let viol = y
        .iter()
        .chain(w)
        .fold(S::zero(), |acc, &a| acc + (-a).pos_part());
    dot.abs_val() + viol
}

pub(crate) fn kkt_residual_generic<S: Real>(
    problem: &MpecProblem,
    x: &[S],
    y: &[S],
    lambda: &[S],
    norm: Norm,
    form: StationarityForm,
) -> S {
    let f = problem.equilibrium_map_generic(x, y);
    let stat: Vec<S> = f.iter().zip(lambda).map(|(&a, &l)| a - l).collect();
    let mut r = match form {
        StationarityForm::Norm => norm_of(&stat, norm),
        StationarityForm::Squared => sum_sq(&stat),
    };
    for (&yi, &li) in y.iter().zip(lambda) {
        r = r + (-yi).pos_part() + (-li).pos_part() + (li * yi).abs_val();
    }
    r
}

/// Residual selected by `spec.kind` at flattened coordinates.
pub(crate) fn residual_generic<S: Real>(
    problem: &MpecProblem,
    x: &[S],
    y: &[S],
    lambda: &[S],
    spec: &ResidualSpec,
) -> S {
    match spec.kind {
        ResidualKind::KktComposite => {
            kkt_residual_generic(problem, x, y, lambda, spec.norm, spec.stationarity)
        }
        ResidualKind::MinResidual => {
            let w = problem.equilibrium_map_generic(x, y);
            min_residual_generic(y, &w, spec.norm)
        }
        ResidualKind::ProductResidual => {
            let w = problem.equilibrium_map_generic(x, y);
            product_penalty_generic(y, &w)
        }
    }
}

/// KKT composite residual of the one-level reformulation, using
/// `spec.norm` and `spec.stationarity` (the `kind` field is not consulted).
pub fn kkt_residual(problem: &MpecProblem, z: &KktPoint, spec: &ResidualSpec) -> Result<f64> {
    z.check_dims(problem)?;
    Ok(kkt_residual_generic(
        problem,
        &z.x,
        &z.y,
        &z.lambda,
        spec.norm,
        spec.stationarity,
    ))
}

/// Residual chosen by `spec.kind`.
pub fn residual(problem: &MpecProblem, z: &KktPoint, spec: &ResidualSpec) -> Result<f64> {
    z.check_dims(problem)?;
    Ok(residual_generic(problem, &z.x, &z.y, &z.lambda, spec))
}

/// `f(x, y) + α·r(z)^γ`.
pub fn penalized_objective(
    problem: &MpecProblem,
    z: &KktPoint,
    alpha: f64,
    spec: &ResidualSpec,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidValue(format!(
            "alpha must be nonnegative, got {alpha}"
        )));
    }
    spec.validate()?;
    let r = residual(problem, z, spec)?;
    let f = problem.objective().value(&z.x, &z.y);
    Ok(f + alpha * penalty_power(r, spec.gamma))
}

/// `r^γ` with `0^γ = 0`.
pub(crate) fn penalty_power(r: f64, gamma: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if gamma == 1.0 {
        r
    } else if gamma == 0.5 {
        r.sqrt()
    } else {
        r.powf(gamma)
    }
}

/// Directional derivative of `min(u, v)` at `(u, v)` along `(du, dv)`.
pub fn min_dirderiv(u: f64, v: f64, du: f64, dv: f64) -> f64 {
    if u < v {
        du
    } else if u > v {
        dv
    } else {
        du.min(dv)
    }
}

/// `‖F − λ‖₂² + Σ λᵢyᵢ`, the differentiable residual behind
/// [`grad_penalized_sqrt`].
pub fn squared_kkt_residual(problem: &MpecProblem, z: &KktPoint) -> Result<f64> {
    z.check_dims(problem)?;
    Ok(squared_kkt_generic(problem, &z.x, &z.y, &z.lambda))
}

fn squared_kkt_generic(problem: &MpecProblem, x: &[f64], y: &[f64], lambda: &[f64]) -> f64 {
    let f = problem.equilibrium_map_generic(x, y);
    let stat: f64 = f.iter().zip(lambda).map(|(a, l)| (a - l) * (a - l)).sum();
    let comp: f64 = y.iter().zip(lambda).map(|(a, b)| a * b).sum();
    stat + comp
}

/// Gradient of `f + α·√r` with `r = ‖F − λ‖₂² + Σ λᵢyᵢ`, flattened over
/// `(x, y, λ)`. Fails with [`Error::AtKink`] when `r ≤ KINK_TOLERANCE`.
pub fn grad_penalized_sqrt(problem: &MpecProblem, z: &KktPoint, alpha: f64) -> Result<Vec<f64>> {
    grad_penalized_sqrt_with_tol(problem, z, alpha, KINK_TOLERANCE)
}

pub fn grad_penalized_sqrt_with_tol(
    problem: &MpecProblem,
    z: &KktPoint,
    alpha: f64,
    kink_tol: f64,
) -> Result<Vec<f64>> {
    z.check_dims(problem)?;
    let r = squared_kkt_generic(problem, &z.x, &z.y, &z.lambda);
    if !(r > kink_tol) {
        return Err(Error::AtKink { residual: r });
    }
    let (n, m) = (problem.n(), problem.m());
    let f = problem.equilibrium_map_generic(&z.x, &z.y);
    let s: Vec<f64> = f.iter().zip(&z.lambda).map(|(a, l)| a - l).collect();

    // ∇r: 2·Jᵀs from the stationarity block, J = [Q  M  −I].
    let mut grad_r = vec![0.0; n + 2 * m];
    let q = problem.qmap().matrix();
    let mm = problem.lcp_matrix();
    for i in 0..m {
        let si = 2.0 * s[i];
        for j in 0..n {
            grad_r[j] += q[(i, j)] * si;
        }
        for j in 0..m {
            grad_r[n + j] += mm[(i, j)] * si;
        }
        grad_r[n + m + i] -= si;
    }
    // Complementarity products λᵢyᵢ.
    for i in 0..m {
        grad_r[n + i] += z.lambda[i];
        grad_r[n + m + i] += z.y[i];
    }

    let (gx, gy) = problem.objective().gradient(&z.x, &z.y);
    let scale = alpha / (2.0 * r.sqrt());
    let mut g: Vec<f64> = gx
        .into_iter()
        .chain(gy)
        .chain(std::iter::repeat_n(0.0, m))
        .collect();
    for (gi, ri) in g.iter_mut().zip(&grad_r) {
        *gi += scale * ri;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lcp_mpec, AffineParamMap, QuadObjective};
    use nalgebra::{DMatrix, DVector};

    fn addq1() -> MpecProblem {
        let mut f = QuadObjective::zeros(1, 2);
        f.xx[(0, 0)] = 1.0;
        f.y_lin = DVector::from_column_slice(&[1.0, 1.0]);
        build_lcp_mpec(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
            AffineParamMap::new(
                DMatrix::from_column_slice(2, 1, &[-1.0, 0.0]),
                DVector::from_column_slice(&[0.0, -1.0]),
            )
            .unwrap(),
            f,
            vec![(0.0, 2.0)],
            4.0,
        )
        .unwrap()
    }

    fn addq2() -> MpecProblem {
        let mut f = QuadObjective::zeros(1, 2);
        f.xx[(0, 0)] = 1.0;
        f.x_lin[0] = -2.0;
        f.y_lin = DVector::from_column_slice(&[2.0, 1.0]);
        f.constant = 1.0;
        build_lcp_mpec(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            AffineParamMap::new(
                DMatrix::from_column_slice(2, 1, &[-1.0, -1.0]),
                DVector::from_column_slice(&[0.0, 1.0]),
            )
            .unwrap(),
            f,
            vec![(0.0, 2.0)],
            4.0,
        )
        .unwrap()
    }

    fn bilevel() -> MpecProblem {
        build_lcp_mpec(
            DMatrix::identity(1, 1),
            AffineParamMap::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap(),
            QuadObjective::linear(&[1.0], &[-1.0], 0.0),
            vec![(0.0, 2.0)],
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn min_residual_examples() {
        let t = 3.0;
        let r = min_residual(&[t, 1.0], &[-2.0, t + 2.0], Norm::L2).unwrap();
        assert!((r - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            min_residual(&[0.5, 0.0], &[0.0, 0.0], Norm::L1).unwrap(),
            0.0
        );
        assert_eq!(
            min_residual(&[0.0, 0.0], &[-1.0, 0.0], Norm::L1).unwrap(),
            1.0
        );
        assert!(min_residual(&[0.0], &[1.0, 2.0], Norm::L1).is_err());
    }

    #[test]
    fn product_residual_examples() {
        assert_eq!(product_residual(&[1.0, 1.0], &[0.0, 3.0]).unwrap(), 3.0);
        assert_eq!(product_residual(&[0.0, 0.0], &[5.0, -3.0]).unwrap(), 0.0);
        assert_eq!(product_residual(&[0.5, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn kkt_residual_examples() {
        let spec = ResidualSpec::default();
        let p1 = addq1();
        let z = KktPoint::new(vec![1.0], vec![0.0, 1.0], vec![0.0, 0.0]);
        assert_eq!(kkt_residual(&p1, &z, &spec).unwrap(), 2.0);

        let p2 = addq2();
        let feasible = KktPoint::new(vec![1.0], vec![0.5, 0.0], vec![0.0, 0.0]);
        assert_eq!(kkt_residual(&p2, &feasible, &spec).unwrap(), 0.0);

        // Independent arithmetic: M·y + q(1) = (2·(−1) − 1, 0 + 1 − 1) = (−3, 0).
        // ‖(−3, 0) − 0‖₁ = 3, [−y₁]₊ = 1, no dual or complementarity violation.
        let w = [-2.0 - 1.0, 0.0 + (1.0 - 1.0)];
        let oracle = w.iter().map(|a: &f64| a.abs()).sum::<f64>() + 1.0;
        let l1 = ResidualSpec {
            norm: Norm::L1,
            ..spec
        };
        let z = KktPoint::new(vec![1.0], vec![-1.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(oracle, 4.0);
        assert_eq!(kkt_residual(&p2, &z, &l1).unwrap(), oracle);
    }

    #[test]
    fn penalized_objective_examples() {
        let p = bilevel();
        let product = ResidualSpec::new(ResidualKind::ProductResidual, Norm::L2, 0.5).unwrap();
        let z = KktPoint::new(vec![0.0], vec![0.25], vec![0.25]);
        let v = penalized_objective(&p, &z, 2.0, &product).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let kkt = ResidualSpec::default();
        assert!((penalized_objective(&p, &z, 2.0, &kkt).unwrap() - 0.25).abs() < 1e-15);

        // order 1 at x = 0: −y + α·y²
        let order1 = ResidualSpec::new(ResidualKind::ProductResidual, Norm::L2, 1.0).unwrap();
        for &(y, alpha) in &[(0.1, 3.0), (0.7, 1.0)] {
            let z = KktPoint::new(vec![0.0], vec![y], vec![y]);
            let v = penalized_objective(&p, &z, alpha, &order1).unwrap();
            assert!((v - (-y + alpha * y * y)).abs() < 1e-15);
        }

        let feasible = KktPoint::new(vec![1.5], vec![0.0], vec![1.5]);
        assert_eq!(penalized_objective(&p, &feasible, 7.0, &kkt).unwrap(), 1.5);
        assert!(penalized_objective(&p, &feasible, -1.0, &kkt).is_err());
    }

    #[test]
    fn min_dirderiv_cases() {
        assert_eq!(min_dirderiv(0.0, 0.0, 1.0, -2.0), -2.0);
        assert_eq!(min_dirderiv(1.0, 2.0, 7.0, -9.0), 7.0);
        assert_eq!(min_dirderiv(2.0, 1.0, 7.0, -9.0), -9.0);
        assert_eq!(min_dirderiv(5.0, 5.0, 3.0, 3.0), 3.0);
    }

    #[test]
    fn sqrt_gradient_at_kink_is_refused() {
        let p = addq2();
        let z = KktPoint::new(vec![1.0], vec![0.5, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            grad_penalized_sqrt(&p, &z, 1.0),
            Err(Error::AtKink { .. })
        ));
    }

    #[test]
    fn sqrt_gradient_single_active_pair() {
        // F − λ = 0 with λ₁ = 0.5 > 0, y₁ = 0.4 > 0, second pair inactive.
        let p = addq2();
        let (x, y1) = (0.2, 0.4);
        let y = [y1, 0.0];
        let f = p.equilibrium_map_generic(&[x], &y);
        let z = KktPoint::new(vec![x], y.to_vec(), f.clone());
        assert!(f[0] > 0.0);
        let alpha = 3.0;
        let g = grad_penalized_sqrt(&p, &z, alpha).unwrap();
        let (_, gy) = p.objective().gradient(&z.x, &z.y);
        let expected = gy[0] + alpha * f[0] / (2.0 * (f[0] * y1).sqrt());
        assert!((g[1] - expected).abs() < 1e-12, "{} vs {}", g[1], expected);
    }
}
