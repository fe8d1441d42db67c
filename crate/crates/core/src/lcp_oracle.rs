//! Brute-force LCP ground truth.
//!
//! Every complementary basis `I ⊆ {1..m}` is tried: `M_II·y_I = −q_I`,
//! `y_{Iᶜ} = 0`. A basis is kept when the resulting `y` passes the
//! feasibility/complementarity check. This is exponential in `m` and meant for
//! desk-scale instances only.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AffineParamMap, LcpInstance};

pub const MAX_ORDER: usize = 20;
pub const FEASIBILITY_TOL: f64 = 1e-10;
pub const DEDUP_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionSet {
    pub points: Vec<Vec<f64>>,
    pub empty: bool,
    /// Number of index sets examined (always `2^m`).
    pub bases_explored: usize,
    /// Index sets skipped because `M_II` is singular.
    pub singular_bases: usize,
}

impl SolutionSet {
    /// A set given by hand, e.g. a documented nominal solution set.
    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        SolutionSet {
            empty: points.is_empty(),
            points,
            bases_explored: 0,
            singular_bases: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// `y ≥ −tol`, `My + q ≥ −tol`, `|yᵀ(My + q)| ≤ tol`.
pub fn is_lcp_solution(lcp: &LcpInstance, y: &[f64], tol: f64) -> bool {
    let Ok(w) = lcp.w(y) else { return false };
    let comp: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
    y.iter().all(|&v| v >= -tol) && w.iter().all(|&v| v >= -tol) && comp.abs() <= tol
}

fn solve_principal(m: &DMatrix<f64>, q: &DVector<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |i, j| m[(idx[i], idx[j])]);
    let rhs = DVector::from_fn(k, |i, _| -q[idx[i]]);
    let scale = sub.amax().max(1.0);
    let lu = sub.lu();
    let u = lu.u();
    if (0..k).any(|i| u[(i, i)].abs() <= PIVOT_TOL * scale) {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    let mut y = vec![0.0; m.nrows()];
    for (i, &j) in idx.iter().enumerate() {
        y[j] = sol[i];
    }
    Some(y)
}

fn indices(mask: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|i| mask & (1 << i) != 0).collect()
}

/// All solutions of the LCP reachable through nonsingular complementary bases.
pub fn solve_lcp_enumerate(lcp: &LcpInstance) -> Result<SolutionSet> {
    let m = lcp.order();
    if m > MAX_ORDER {
        return Err(Error::TooLarge {
            order: m,
            limit: MAX_ORDER,
        });
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut singular = 0;
    let total = 1usize << m;
    for mask in 0..total {
        let idx = indices(mask, m);
        let y = if idx.is_empty() {
            vec![0.0; m]
        } else {
            match solve_principal(lcp.matrix(), lcp.q(), &idx) {
                Some(y) => y,
                None => {
                    singular += 1;
                    continue;
                }
            }
        };
        if !is_lcp_solution(lcp, &y, FEASIBILITY_TOL) {
            continue;
        }
        let dup = points
            .iter()
            .any(|p| p.iter().zip(&y).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !dup {
            points.push(y);
        }
    }
    Ok(SolutionSet {
        empty: points.is_empty(),
        points,
        bases_explored: total,
        singular_bases: singular,
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance from `z` to the nearest listed solution.
pub fn distance_to_solution_set(z: &[f64], sols: &SolutionSet) -> Result<f64> {
    if sols.is_empty() {
        return Err(Error::EmptySolutionSet);
    }
    let mut best = f64::INFINITY;
    for p in &sols.points {
        if p.len() != z.len() {
            return Err(Error::dims("point vs solution", p.len(), z.len()));
        }
        best = best.min(euclid(z, p));
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct PathPoint {
    pub x: Vec<f64>,
    pub solutions: SolutionSet,
}

/// Enumerates `SOL(q(x), M)` at every grid point.
pub fn parametric_solution_path(
    matrix: &DMatrix<f64>,
    qmap: &AffineParamMap,
    x_grid: &[Vec<f64>],
) -> Result<Vec<PathPoint>> {
    if x_grid.is_empty() {
        return Err(Error::InvalidValue("parameter grid is empty".into()));
    }
    x_grid
        .iter()
        .map(|x| {
            if x.len() != qmap.cols() {
                return Err(Error::dims("grid point", qmap.cols(), x.len()));
            }
            let lcp = LcpInstance::new(matrix.clone(), qmap.eval(x))?;
            Ok(PathPoint {
                x: x.clone(),
                solutions: solve_lcp_enumerate(&lcp)?,
            })
        })
        .collect()
}

/// True iff every principal minor of `matrix` is positive.
pub fn is_p_matrix(matrix: &DMatrix<f64>) -> Result<bool> {
    if !matrix.is_square() {
        return Err(Error::dims(
            "columns of a square matrix",
            matrix.nrows(),
            matrix.ncols(),
        ));
    }
    let m = matrix.nrows();
    if m > MAX_ORDER {
        return Err(Error::TooLarge {
            order: m,
            limit: MAX_ORDER,
        });
    }
    for mask in 1..(1usize << m) {
        let idx = indices(mask, m);
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |i, j| matrix[(idx[i], idx[j])]);
        if !(sub.determinant() > 0.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `max ‖y(x₁) − y(x₂)‖ / ‖x₁ − x₂‖` over all grid pairs.
pub fn estimate_lipschitz_modulus(path: &[PathPoint]) -> Result<f64> {
    for (index, p) in path.iter().enumerate() {
        if p.solutions.len() != 1 {
            return Err(Error::NonUniqueSolution {
                index,
                count: p.solutions.len(),
            });
        }
    }
    let mut best: f64 = 0.0;
    for i in 0..path.len() {
        for j in i + 1..path.len() {
            let dx = euclid(&path[i].x, &path[j].x);
            if dx == 0.0 {
                continue;
            }
            let dy = euclid(&path[i].solutions.points[0], &path[j].solutions.points[0]);
            best = best.max(dy / dx);
        }
    }
    Ok(best)
}

/// Upper bound `γ_F / c` on the solution-map modulus, with `γ_F = ‖Q‖₂` and
/// `c` the smallest eigenvalue of the symmetric part of `M` as the uniform-P
/// constant. Returns `None` when that eigenvalue is not positive.
pub fn lipschitz_bound(matrix: &DMatrix<f64>, qmap: &AffineParamMap) -> Option<f64> {
    let sym = (matrix + matrix.transpose()) * 0.5;
    let c = sym.symmetric_eigen().eigenvalues.min();
    if c <= 0.0 {
        return None;
    }
    let gamma_f = qmap
        .matrix()
        .clone()
        .svd(false, false)
        .singular_values
        .max();
    Some(gamma_f / c)
}
