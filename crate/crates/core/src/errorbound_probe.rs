//! Empirical error-bound probes: `dist(z, S) ≤ τ·r(z)^γ`.
//!
//! Exponents are fitted by least squares on `log dist = log τ + γ·log r`.
//! Alongside the regression constant, every estimate carries the max-ratio
//! constant `max dist / r^γ̂`, which certifies the bound on the cloud it was
//! fitted on.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lcp_oracle::{distance_to_solution_set, solve_lcp_enumerate, SolutionSet};
use crate::model::LcpInstance;
use crate::residuals::{min_residual, Norm};

/// Samples with a smaller residual are left out of fits.
pub const R_FLOOR: f64 = 1e-10;
pub const MIN_SAMPLES: usize = 10;
/// Largest inequality count handled by face-enumeration projection.
pub const MAX_FACES_ROWS: usize = 16;

const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBoundEstimate {
    pub gamma_hat: f64,
    /// Regression constant.
    pub tau_hat: f64,
    /// `max dist / r^gamma_hat` over the samples used.
    pub tau_max_ratio: f64,
    pub sample_count: usize,
    pub r_range: (f64, f64),
    /// RMS of the log-log regression residuals.
    pub fit_residual: f64,
    pub degenerate: bool,
}

impl ErrorBoundEstimate {
    /// `dist ≤ (1 + rel)·tau_max_ratio·r^gamma_hat` on every usable sample.
    pub fn certifies(&self, samples: &[(f64, f64)], rel: f64) -> bool {
        usable(samples).all(|(d, r)| d <= (1.0 + rel) * self.tau_max_ratio * r.powf(self.gamma_hat))
    }
}

fn usable(samples: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64)> + '_ {
    samples
        .iter()
        .copied()
        .filter(|&(d, r)| d > 0.0 && d.is_finite() && r > R_FLOOR && r.is_finite())
}

/// One row of a probe table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSample {
    /// Ray parameter `t`, or the sample index.
    pub id: f64,
    pub residual: f64,
    /// `None` when the solution set is empty.
    pub distance: Option<f64>,
}

/// `count` points uniform in `bounds`, deterministic per `seed`.
pub fn sample_cloud(bounds: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidValue("cloud size must be at least 1".into()));
    }
    for (index, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedBox { index });
        }
        if lo > hi {
            return Err(Error::EmptyInterval { index, lo, hi });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect()
        })
        .collect())
}

/// Fits `log dist = log τ + γ·log r` over samples `(dist, r)`.
pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<ErrorBoundEstimate> {
    let pts: Vec<(f64, f64)> = usable(samples).map(|(d, r)| (r.ln(), d.ln())).collect();
    if pts.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            found: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-300 {
        return Err(Error::InvalidValue(
            "residuals have no spread; exponent is not identifiable".into(),
        ));
    }
    let gamma = sxy / sxx;
    if !(gamma > 0.0) {
        return Err(Error::InvalidValue(format!(
            "fitted exponent {gamma} is not positive"
        )));
    }
    let log_tau = my - gamma * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - log_tau - gamma * p.0).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let tau_max = pts
        .iter()
        .map(|p| (p.1 - gamma * p.0).exp())
        .fold(0.0, f64::max);
    let (rmin, rmax) = usable(samples).fold((f64::INFINITY, 0.0f64), |(a, b), (_, r)| {
        (a.min(r), b.max(r))
    });
    Ok(ErrorBoundEstimate {
        gamma_hat: gamma,
        tau_hat: log_tau.exp(),
        tau_max_ratio: tau_max,
        sample_count: pts.len(),
        r_range: (rmin, rmax),
        fit_residual: rms,
        degenerate: false,
    })
}

/// Min-residual and oracle distance for every point of a cloud in `y`-space.
pub fn lcp_cloud_samples(
    lcp: &LcpInstance,
    cloud: &[Vec<f64>],
    norm: Norm,
) -> Result<Vec<ProbeSample>> {
    let sols = solve_lcp_enumerate(lcp)?;
    cloud
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let w = lcp.w(y)?;
            Ok(ProbeSample {
                id: i as f64,
                residual: min_residual(y, &w, norm)?,
                distance: if sols.is_empty() {
                    None
                } else {
                    Some(distance_to_solution_set(y, &sols)?)
                },
            })
        })
        .collect()
}

/// `(dist, r)` pairs of the samples that have a distance.
pub fn fit_pairs(samples: &[ProbeSample]) -> Vec<(f64, f64)> {
    samples
        .iter()
        .filter_map(|s| s.distance.map(|d| (d, s.residual)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayReport {
    pub samples: Vec<ProbeSample>,
    pub residual_band: f64,
    pub distance_growth: Option<f64>,
    pub refuted: bool,
    pub notes: Vec<String>,
}

impl RayReport {
    pub fn flags(&self) -> Vec<&'static str> {
        if self.refuted {
            vec!["GLOBAL-BOUND-REFUTED"]
        } else {
            Vec::new()
        }
    }
}

/// Residual and distance along `base + t·direction`.
///
/// Distances are measured to `nominal` when given, otherwise to the oracle
/// solution set. The global bound is refuted when the residual stays in a
/// band (`max/min ≤ 10`) while the distance grows at least 100-fold.
pub fn ray_divergence_test(
    lcp: &LcpInstance,
    base: &[f64],
    direction: &[f64],
    t_values: &[f64],
    nominal: Option<&SolutionSet>,
) -> Result<RayReport> {
    let m = lcp.order();
    if base.len() != m {
        return Err(Error::dims("ray base", m, base.len()));
    }
    if direction.len() != m {
        return Err(Error::dims("ray direction", m, direction.len()));
    }
    if t_values.is_empty() || t_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidValue(
            "t values must be nonempty and increasing".into(),
        ));
    }
    let mut notes = Vec::new();
    let oracle;
    let set = match nominal {
        Some(s) => {
            notes.push("distances measured to the supplied nominal solution set".to_string());
            s
        }
        None => {
            oracle = solve_lcp_enumerate(lcp)?;
            &oracle
        }
    };
    if set.is_empty() {
        notes.push("solution set is empty: distance diverges by construction".to_string());
    }

    let mut samples = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let y: Vec<f64> = base.iter().zip(direction).map(|(b, d)| b + t * d).collect();
        let w = lcp.w(&y)?;
        samples.push(ProbeSample {
            id: t,
            residual: min_residual(&y, &w, Norm::L2)?,
            distance: if set.is_empty() {
                None
            } else {
                Some(distance_to_solution_set(&y, set)?)
            },
        });
    }

    let rmax = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let rmin = samples
        .iter()
        .map(|s| s.residual)
        .fold(f64::INFINITY, f64::min);
    let residual_band = if rmax == 0.0 { 1.0 } else { rmax / rmin };
    let distance_growth = match (
        samples.first().and_then(|s| s.distance),
        samples.last().and_then(|s| s.distance),
    ) {
        (Some(d0), Some(d1)) if d0 > 0.0 => Some(d1 / d0),
        (Some(_), Some(d1)) if d1 > 0.0 => Some(f64::INFINITY),
        (Some(_), Some(_)) => Some(1.0),
        _ => None,
    };
    let refuted =
        rmin > 0.0 && residual_band <= 10.0 && distance_growth.is_some_and(|g| g >= 100.0);
    Ok(RayReport {
        samples,
        residual_band,
        distance_growth,
        refuted,
        notes,
    })
}

/// Polyhedron `{x : A·x ≤ a, B·x = b}`.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    pub a_mat: DMatrix<f64>,
    pub a: DVector<f64>,
    pub b_mat: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(
        a_mat: DMatrix<f64>,
        a: DVector<f64>,
        b_mat: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let n = a_mat.ncols().max(b_mat.ncols());
        if a_mat.nrows() > 0 && a_mat.ncols() != n {
            return Err(Error::dims("columns of A", n, a_mat.ncols()));
        }
        if b_mat.nrows() > 0 && b_mat.ncols() != n {
            return Err(Error::dims("columns of B", n, b_mat.ncols()));
        }
        if a.len() != a_mat.nrows() {
            return Err(Error::dims("length of a", a_mat.nrows(), a.len()));
        }
        if b.len() != b_mat.nrows() {
            return Err(Error::dims("length of b", b_mat.nrows(), b.len()));
        }
        if a_mat.nrows() > MAX_FACES_ROWS {
            return Err(Error::TooLarge {
                order: a_mat.nrows(),
                limit: MAX_FACES_ROWS,
            });
        }
        Ok(Polyhedron { a_mat, a, b_mat, b })
    }

    pub fn dim(&self) -> usize {
        self.a_mat.ncols().max(self.b_mat.ncols())
    }

    /// `‖[A·x − a]₊‖ + ‖B·x − b‖`.
    pub fn residual(&self, x: &[f64], norm: Norm) -> f64 {
        let xv = DVector::from_column_slice(x);
        let nrm = |v: &[f64]| match norm {
            Norm::L1 => v.iter().map(|c| c.abs()).sum::<f64>(),
            Norm::L2 => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
        };
        let ineq: Vec<f64> = if self.a_mat.nrows() > 0 {
            (&self.a_mat * &xv - &self.a)
                .iter()
                .map(|v| v.max(0.0))
                .collect()
        } else {
            Vec::new()
        };
        let eq: Vec<f64> = if self.b_mat.nrows() > 0 {
            (&self.b_mat * &xv - &self.b).iter().copied().collect()
        } else {
            Vec::new()
        };
        nrm(&ineq) + nrm(&eq)
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        let ineq_ok =
            self.a_mat.nrows() == 0 || (&self.a_mat * x - &self.a).iter().all(|v| *v <= FEAS_TOL);
        let eq_ok = self.b_mat.nrows() == 0
            || (&self.b_mat * x - &self.b)
                .iter()
                .all(|v| v.abs() <= FEAS_TOL);
        ineq_ok && eq_ok
    }

    /// Euclidean projection, by enumerating which inequalities are active.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let xv = DVector::from_column_slice(x);
        if xv.len() != n {
            return Err(Error::dims("point", n, xv.len()));
        }
        let p = self.a_mat.nrows();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0..(1usize << p) {
            let active: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
            let rows = active.len() + self.b_mat.nrows();
            let cand = if rows == 0 {
                xv.clone()
            } else {
                let mut j = DMatrix::zeros(rows, n);
                let mut rhs = DVector::zeros(rows);
                for (k, &i) in active.iter().enumerate() {
                    j.set_row(k, &self.a_mat.row(i));
                    rhs[k] = self.a[i];
                }
                for i in 0..self.b_mat.nrows() {
                    j.set_row(active.len() + i, &self.b_mat.row(i));
                    rhs[active.len() + i] = self.b[i];
                }
                let res = &j * &xv - &rhs;
                let Ok(corr) = j.clone().svd(true, true).solve(&res, 1e-12) else {
                    continue;
                };
                let c = &xv - corr;
                if (&j * &c - &rhs).amax() > FEAS_TOL {
                    continue;
                }
                c
            };
            if !self.contains(&cand) {
                continue;
            }
            let d = (&cand - &xv).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, cand));
            }
        }
        best.map(|(_, c)| c.iter().copied().collect())
            .ok_or(Error::EmptyPolyhedron)
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let p = self.project(x)?;
        Ok(p.iter()
            .zip(x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

/// Hoffman-type baseline: exponent fixed at 1, constant = max `dist / r`.
pub fn hoffman_baseline(
    poly: &Polyhedron,
    cloud: &[Vec<f64>],
    norm: Norm,
) -> Result<(ErrorBoundEstimate, Vec<ProbeSample>)> {
    if cloud.is_empty() {
        return Err(Error::InvalidValue("empty cloud".into()));
    }
    let mut samples = Vec::with_capacity(cloud.len());
    for (i, x) in cloud.iter().enumerate() {
        samples.push(ProbeSample {
            id: i as f64,
            residual: poly.residual(x, norm),
            distance: Some(poly.distance(x)?),
        });
    }
    let pairs = fit_pairs(&samples);
    let used: Vec<(f64, f64)> = usable(&pairs).collect();
    if used.is_empty() {
        return Ok((
            ErrorBoundEstimate {
                gamma_hat: 1.0,
                tau_hat: 0.0,
                tau_max_ratio: 0.0,
                sample_count: 0,
                r_range: (0.0, 0.0),
                fit_residual: 0.0,
                degenerate: true,
            },
            samples,
        ));
    }
    let tau = used.iter().map(|&(d, r)| d / r).fold(0.0, f64::max);
    let k = used.len() as f64;
    let rms = (used
        .iter()
        .map(|&(d, r)| (d / (tau * r)).ln().powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let (rmin, rmax) = used
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &(_, r)| {
            (a.min(r), b.max(r))
        });
    Ok((
        ErrorBoundEstimate {
            gamma_hat: 1.0,
            tau_hat: tau,
            tau_max_ratio: tau,
            sample_count: used.len(),
            r_range: (rmin, rmax),
            fit_residual: rms,
            degenerate: false,
        },
        samples,
    ))
}

/// Tab-separated table with a header row.
pub fn tsv_table(label: &str, samples: &[ProbeSample]) -> String {
    let mut out = format!("{label}\tresidual\tdistance\n");
    for s in samples {
        let d = match s.distance {
            Some(d) => format!("{d:e}"),
            None => "inf".to_string(),
        };
        out.push_str(&format!("{}\t{:e}\t{}\n", s.id, s.residual, d));
    }
    out
}

// ---------------------------------------------------------------------------
// Built-in probe fixtures

pub const PROBE_FIXTURES: [&str; 3] = ["linear-halfspace", "quad-scalar", "lcp-cloud"];

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRun {
    pub fixture: String,
    pub samples: Vec<ProbeSample>,
    pub estimate: ErrorBoundEstimate,
    /// Present for linear systems.
    pub hoffman: Option<ErrorBoundEstimate>,
    /// The a-posteriori bound holds on every sample used.
    pub certified: bool,
}

/// Half-space `{x₁ ≤ 0}` in the plane.
pub fn halfspace() -> Polyhedron {
    Polyhedron::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::from_element(1, 0.0),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
    )
    .expect("valid half-space")
}

/// The parametric LCP `M = diag(2, 1)`, `q = (−x, 1 − x)` frozen at `x = 1`.
pub fn lcp_cloud_instance() -> LcpInstance {
    LcpInstance::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]], &[-1.0, 0.0]).expect("valid instance")
}

pub fn run_probe_fixture(name: &str, count: usize, seed: u64) -> Result<ProbeRun> {
    let (samples, hoffman) = match name {
        "linear-halfspace" => {
            let cloud = sample_cloud(&[(-1.0, 1.0), (-1.0, 1.0)], count, seed)?;
            let (h, samples) = hoffman_baseline(&halfspace(), &cloud, Norm::L2)?;
            (samples, Some(h))
        }
        "quad-scalar" => {
            // {x : x² ≤ 0} with residual [x²]₊; distance |x|.
            let cloud = sample_cloud(&[(-1.0, 1.0)], count, seed)?;
            let samples = cloud
                .iter()
                .enumerate()
                .map(|(i, x)| ProbeSample {
                    id: i as f64,
                    residual: (x[0] * x[0]).max(0.0),
                    distance: Some(x[0].abs()),
                })
                .collect();
            (samples, None)
        }
        "lcp-cloud" => {
            let cloud = sample_cloud(&[(-1.0, 2.0), (-1.0, 2.0)], count, seed)?;
            (
                lcp_cloud_samples(&lcp_cloud_instance(), &cloud, Norm::L2)?,
                None,
            )
        }
        other => return Err(Error::UnknownCase(other.to_string())),
    };
    let pairs = fit_pairs(&samples);
    let estimate = fit_exponent(&pairs)?;
    let mut certified = estimate.certifies(&pairs, 1e-6);
    if let Some(h) = &hoffman {
        certified &= h.degenerate || h.certifies(&pairs, 1e-9);
    }
    Ok(ProbeRun {
        fixture: name.to_string(),
        samples,
        estimate,
        hoffman,
        certified,
    })
}

/// The skew LCP `M = [[0, −1], [1, 0]]`, `q = (−1, 2)`.
pub fn q1_instance() -> LcpInstance {
    LcpInstance::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]], &[-1.0, 2.0])
        .expect("valid instance")
}

/// The nominal solution set `{(1, 1), (0, 2)}` documented for the skew LCP.
/// The data as given have no solution at all.
pub fn q1_nominal_set() -> SolutionSet {
    SolutionSet::from_points(vec![vec![1.0, 1.0], vec![0.0, 2.0]])
}

pub fn q1_t_values() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powf(k as f64 / 2.0)).collect()
}

/// Ray `(t, 1)` against the nominal set.
pub fn run_q1_ray() -> Result<RayReport> {
    ray_divergence_test(
        &q1_instance(),
        &[0.0, 1.0],
        &[1.0, 0.0],
        &q1_t_values(),
        Some(&q1_nominal_set()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_box_cloud() {
        let c = sample_cloud(&[(0.0, 0.0), (0.0, 0.0)], 1, 7).unwrap();
        assert_eq!(c, vec![vec![0.0, 0.0]]);
        assert_eq!(
            sample_cloud(&[(-3.0, 3.0)], 5, 1).unwrap(),
            sample_cloud(&[(-3.0, 3.0)], 5, 1).unwrap()
        );
        assert!(sample_cloud(&[(0.0, f64::INFINITY)], 5, 1).is_err());
    }

    #[test]
    fn too_few_samples() {
        let s: Vec<(f64, f64)> = (1..=9).map(|k| (k as f64, k as f64)).collect();
        assert!(matches!(
            fit_exponent(&s),
            Err(Error::TooFewSamples {
                required: 10,
                found: 9
            })
        ));
    }

    #[test]
    fn linear_identity_fit() {
        let cloud = sample_cloud(&[(-1.0, 1.0), (-1.0, 1.0)], 200, 3).unwrap();
        let s: Vec<(f64, f64)> = cloud.iter().map(|x| (x[0].abs(), x[0].abs())).collect();
        let e = fit_exponent(&s).unwrap();
        assert!(
            (e.gamma_hat - 1.0).abs() < 1e-6 && (e.tau_hat - 1.0).abs() < 1e-6,
            "{e:?}"
        );
    }

    #[test]
    fn trivial_ray_not_flagged() {
        let lcp = LcpInstance::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        let rep =
            ray_divergence_test(&lcp, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 2.0, 3.0], None).unwrap();
        assert!(rep
            .samples
            .iter()
            .all(|s| s.residual == 0.0 && s.distance == Some(0.0)));
        assert!(!rep.refuted);
    }

    #[test]
    fn q1_ray_without_nominal_reports_empty() {
        let rep = ray_divergence_test(&q1_instance(), &[0.0, 1.0], &[1.0, 0.0], &[1.0, 10.0], None)
            .unwrap();
        assert!(rep.samples.iter().all(|s| s.distance.is_none()));
        assert!(!rep.notes.is_empty());
    }

    #[test]
    fn bad_t_values() {
        assert!(ray_divergence_test(&q1_instance(), &[0.0, 1.0], &[1.0, 0.0], &[], None).is_err());
        assert!(
            ray_divergence_test(&q1_instance(), &[0.0, 1.0], &[1.0, 0.0], &[2.0, 1.0], None)
                .is_err()
        );
    }

    #[test]
    fn projection_onto_quadrant_corner() {
        // {x₁ ≤ 0, x₂ ≤ 0}: (1, 2) projects to the origin.
        let p = Polyhedron::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let q = p.project(&[1.0, 2.0]).unwrap();
        assert!(q.iter().all(|v| v.abs() < 1e-12));
        let q = p.project(&[-1.0, 3.0]).unwrap();
        assert!((q[0] + 1.0).abs() < 1e-12 && q[1].abs() < 1e-12, "{q:?}");
    }

    #[test]
    fn empty_polyhedron() {
        // x ≤ −1 and x ≥ 1
        let p = Polyhedron::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[-1.0, -1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        assert!(matches!(p.project(&[0.0]), Err(Error::EmptyPolyhedron)));
    }

    #[test]
    fn cloud_inside_is_degenerate() {
        let cloud = sample_cloud(&[(-1.0, -0.5), (-1.0, 1.0)], 50, 0).unwrap();
        let (e, _) = hoffman_baseline(&halfspace(), &cloud, Norm::L2).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.tau_hat, 0.0);
    }

    #[test]
    fn unknown_fixture() {
        assert!(matches!(
            run_probe_fixture("nope", 10, 0),
            Err(Error::UnknownCase(_))
        ));
    }
}
