//! Problem data: parametric LCP lower levels, quadratic upper objectives, the
//! one-level `(x, y, λ)` reformulation and the JSON problem-file format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `0 ≤ y ⊥ M·y + q ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LcpInstance {
    matrix: DMatrix<f64>,
    q: DVector<f64>,
}

impl LcpInstance {
    pub fn new(matrix: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dims(
                "LCP matrix columns",
                matrix.nrows(),
                matrix.ncols(),
            ));
        }
        if q.len() != matrix.nrows() {
            return Err(Error::dims("LCP vector q", matrix.nrows(), q.len()));
        }
        check_finite("LCP matrix", matrix.iter())?;
        check_finite("LCP vector q", q.iter())?;
        Ok(LcpInstance { matrix, q })
    }

    pub fn from_rows(rows: &[Vec<f64>], q: &[f64]) -> Result<Self> {
        let m = matrix_from_rows("M", rows, q.len(), q.len())?;
        Self::new(m, DVector::from_column_slice(q))
    }

    pub fn order(&self) -> usize {
        self.q.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// `w = M·y + q`.
    pub fn w(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.order() {
            return Err(Error::dims("LCP point", self.order(), y.len()));
        }
        let w = &self.matrix * DVector::from_column_slice(y) + &self.q;
        Ok(w.iter().copied().collect())
    }
}

/// `q(x) = Q·x + q0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineParamMap {
    q_mat: DMatrix<f64>,
    q0: DVector<f64>,
}

impl AffineParamMap {
    pub fn new(q_mat: DMatrix<f64>, q0: DVector<f64>) -> Result<Self> {
        if q_mat.nrows() != q0.len() {
            return Err(Error::dims(
                "rows of Q vs length of q0",
                q0.len(),
                q_mat.nrows(),
            ));
        }
        check_finite("Q", q_mat.iter())?;
        check_finite("q0", q0.iter())?;
        Ok(AffineParamMap { q_mat, q0 })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.q0
    }

    pub fn rows(&self) -> usize {
        self.q0.len()
    }

    pub fn cols(&self) -> usize {
        self.q_mat.ncols()
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        &self.q_mat * DVector::from_column_slice(x) + &self.q0
    }
}

/// `f(x, y) = xᵀ·XX·x + xᵀ·XY·y + yᵀ·YY·y + x_linᵀx + y_linᵀy + c`.
///
/// No factor ½ on the quadratic blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadObjective {
    pub xx: DMatrix<f64>,
    pub xy: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub x_lin: DVector<f64>,
    pub y_lin: DVector<f64>,
    pub constant: f64,
}

impl QuadObjective {
    pub fn zeros(n: usize, m: usize) -> Self {
        QuadObjective {
            xx: DMatrix::zeros(n, n),
            xy: DMatrix::zeros(n, m),
            yy: DMatrix::zeros(m, m),
            x_lin: DVector::zeros(n),
            y_lin: DVector::zeros(m),
            constant: 0.0,
        }
    }

    /// Linear objective `cxᵀx + cyᵀy + c0`.
    pub fn linear(cx: &[f64], cy: &[f64], c0: f64) -> Self {
        let mut f = Self::zeros(cx.len(), cy.len());
        f.x_lin = DVector::from_column_slice(cx);
        f.y_lin = DVector::from_column_slice(cy);
        f.constant = c0;
        f
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let shape = |name: &str, mat: &DMatrix<f64>, r: usize, c: usize| -> Result<()> {
            if mat.nrows() != r {
                return Err(Error::dims(
                    format!("rows of objective block {name}"),
                    r,
                    mat.nrows(),
                ));
            }
            if mat.ncols() != c {
                return Err(Error::dims(
                    format!("columns of objective block {name}"),
                    c,
                    mat.ncols(),
                ));
            }
            Ok(())
        };
        shape("xx", &self.xx, n, n)?;
        shape("xy", &self.xy, n, m)?;
        shape("yy", &self.yy, m, m)?;
        if self.x_lin.len() != n {
            return Err(Error::dims("objective x_lin", n, self.x_lin.len()));
        }
        if self.y_lin.len() != m {
            return Err(Error::dims("objective y_lin", m, self.y_lin.len()));
        }
        check_finite(
            "objective",
            self.xx
                .iter()
                .chain(self.xy.iter())
                .chain(self.yy.iter())
                .chain(self.x_lin.iter())
                .chain(self.y_lin.iter())
                .chain(std::iter::once(&self.constant)),
        )
    }

    pub fn value<S: Real>(&self, x: &[S], y: &[S]) -> S {
        let mut acc = S::cst(self.constant);
        for i in 0..x.len() {
            acc = acc + x[i].scale(self.x_lin[i]);
            for j in 0..x.len() {
                if self.xx[(i, j)] != 0.0 {
                    acc = acc + (x[i] * x[j]).scale(self.xx[(i, j)]);
                }
            }
            for (j, &yj) in y.iter().enumerate() {
                if self.xy[(i, j)] != 0.0 {
                    acc = acc + (x[i] * yj).scale(self.xy[(i, j)]);
                }
            }
        }
        for i in 0..y.len() {
            acc = acc + y[i].scale(self.y_lin[i]);
            for j in 0..y.len() {
                if self.yy[(i, j)] != 0.0 {
                    acc = acc + (y[i] * y[j]).scale(self.yy[(i, j)]);
                }
            }
        }
        acc
    }

    /// `(∇ₓf, ∇ᵧf)`.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let gx = (&self.xx + self.xx.transpose()) * &xv + &self.xy * &yv + &self.x_lin;
        let gy = self.xy.transpose() * &xv + (&self.yy + self.yy.transpose()) * &yv + &self.y_lin;
        (gx.iter().copied().collect(), gy.iter().copied().collect())
    }
}

/// MPEC with a parametric LCP lower level:
/// minimize `f(x, y)` over `x ∈ x_box` subject to `0 ≤ y ⊥ M·y + q(x) ≥ 0`.
///
/// The one-level variable is `z = (x, y, λ)` with `λ` the multiplier of
/// `y ≥ 0`, so stationarity reads `F(x, y) − λ = 0` where
/// `F(x, y) = M·y + q(x)`. Iterates live in `x_box × [0, c]^m × [0, c]^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpecProblem {
    lcp_matrix: DMatrix<f64>,
    qmap: AffineParamMap,
    objective: QuadObjective,
    x_box: Vec<(f64, f64)>,
    multiplier_bound: f64,
}

pub fn build_lcp_mpec(
    lcp_matrix: DMatrix<f64>,
    qmap: AffineParamMap,
    objective: QuadObjective,
    x_box: Vec<(f64, f64)>,
    multiplier_bound: f64,
) -> Result<MpecProblem> {
    if !lcp_matrix.is_square() {
        return Err(Error::dims(
            "LCP matrix columns",
            lcp_matrix.nrows(),
            lcp_matrix.ncols(),
        ));
    }
    check_finite("M", lcp_matrix.iter())?;
    let m = lcp_matrix.nrows();
    if qmap.rows() != m {
        return Err(Error::dims("rows of Q (order of M)", m, qmap.rows()));
    }
    let n = qmap.cols();
    if x_box.len() != n {
        return Err(Error::dims(
            "x_box intervals (columns of Q)",
            n,
            x_box.len(),
        ));
    }
    validate_box(&x_box)?;
    objective.validate(n, m)?;
    if !(multiplier_bound > 0.0) || !multiplier_bound.is_finite() {
        return Err(Error::InvalidValue(format!(
            "multiplier_bound must be positive and finite, got {multiplier_bound}"
        )));
    }
    Ok(MpecProblem {
        lcp_matrix,
        qmap,
        objective,
        x_box,
        multiplier_bound,
    })
}

impl MpecProblem {
    pub fn n(&self) -> usize {
        self.qmap.cols()
    }

    pub fn m(&self) -> usize {
        self.lcp_matrix.nrows()
    }

    /// Length of the flattened one-level variable `(x, y, λ)`.
    pub fn dim(&self) -> usize {
        self.n() + 2 * self.m()
    }

    pub fn lcp_matrix(&self) -> &DMatrix<f64> {
        &self.lcp_matrix
    }

    pub fn qmap(&self) -> &AffineParamMap {
        &self.qmap
    }

    pub fn objective(&self) -> &QuadObjective {
        &self.objective
    }

    pub fn x_box(&self) -> &[(f64, f64)] {
        &self.x_box
    }

    pub fn multiplier_bound(&self) -> f64 {
        self.multiplier_bound
    }

    /// The lower-level LCP at parameter `x`.
    pub fn lcp_at(&self, x: &[f64]) -> Result<LcpInstance> {
        if x.len() != self.n() {
            return Err(Error::dims("upper variable x", self.n(), x.len()));
        }
        LcpInstance::new(self.lcp_matrix.clone(), self.qmap.eval(x))
    }

    /// `F(x, y) = M·y + Q·x + q0` on generic scalars.
    pub fn equilibrium_map_generic<S: Real>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let m = self.m();
        let q = self.qmap.matrix();
        (0..m)
            .map(|i| {
                let mut acc = S::cst(self.qmap.offset()[i]);
                for (j, &yj) in y.iter().enumerate() {
                    let a = self.lcp_matrix[(i, j)];
                    if a != 0.0 {
                        acc = acc + yj.scale(a);
                    }
                }
                for j in 0..x.len() {
                    let a = q[(i, j)];
                    if a != 0.0 {
                        acc = acc + x[j].scale(a);
                    }
                }
                acc
            })
            .collect()
    }

    pub fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::dims("upper variable x", self.n(), x.len()));
        }
        if y.len() != self.m() {
            return Err(Error::dims("lower variable y", self.m(), y.len()));
        }
        Ok(())
    }

    /// Bounds of the flattened `(x, y, λ)`: `x_box × [0, c]^m × [0, c]^m`.
    pub fn variable_bounds(&self) -> Vec<(f64, f64)> {
        let c = self.multiplier_bound;
        self.x_box
            .iter()
            .copied()
            .chain(std::iter::repeat_n((0.0, c), 2 * self.m()))
            .collect()
    }

    pub fn split<'a, T>(&self, z: &'a [T]) -> (&'a [T], &'a [T], &'a [T]) {
        let (n, m) = (self.n(), self.m());
        (&z[..n], &z[n..n + m], &z[n + m..n + 2 * m])
    }

    pub fn to_document(&self) -> ProblemDocument {
        ProblemDocument {
            n: self.n(),
            m: self.m(),
            lcp_matrix: rows_of(&self.lcp_matrix),
            q_mat: rows_of(self.qmap.matrix()),
            q0: self.qmap.offset().iter().copied().collect(),
            objective: ObjectiveDocument {
                xx: rows_of(&self.objective.xx),
                xy: rows_of(&self.objective.xy),
                yy: rows_of(&self.objective.yy),
                x_lin: self.objective.x_lin.iter().copied().collect(),
                y_lin: self.objective.y_lin.iter().copied().collect(),
                constant: self.objective.constant,
            },
            x_box: self.x_box.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            multiplier_bound: self.multiplier_bound,
            provenance: None,
        }
    }
}

/// `F(x, y) = M·y + q(x)`.
pub fn eval_equilibrium_map(problem: &MpecProblem, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    problem.check_point(x, y)?;
    Ok(problem.equilibrium_map_generic(x, y))
}

/// Candidate one-level point `(x, y, λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl KktPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, lambda: Vec<f64>) -> Self {
        KktPoint { x, y, lambda }
    }

    pub fn check_dims(&self, problem: &MpecProblem) -> Result<()> {
        problem.check_point(&self.x, &self.y)?;
        if self.lambda.len() != problem.m() {
            return Err(Error::dims("multiplier λ", problem.m(), self.lambda.len()));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.x
            .iter()
            .chain(&self.y)
            .chain(&self.lambda)
            .copied()
            .collect()
    }

    pub fn from_flat(n: usize, m: usize, z: &[f64]) -> Self {
        KktPoint {
            x: z[..n].to_vec(),
            y: z[n..n + m].to_vec(),
            lambda: z[n + m..n + 2 * m].to_vec(),
        }
    }
}

/// One-dimensional problem `min f(t)` over `t ∈ [lo, hi]` subject to
/// `r(t) = |min(u(t), v(t))| = 0`, with `f`, `u`, `v` quadratics given by
/// coefficients `[c0, c1, c2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarPairProblem {
    pub objective: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub t_box: [f64; 2],
}

impl ScalarPairProblem {
    pub fn new(objective: [f64; 3], u: [f64; 3], v: [f64; 3], t_box: [f64; 2]) -> Result<Self> {
        validate_box(&[(t_box[0], t_box[1])])?;
        check_finite(
            "scalar-pair coefficients",
            objective.iter().chain(&u).chain(&v),
        )?;
        Ok(ScalarPairProblem {
            objective,
            u,
            v,
            t_box,
        })
    }

    pub fn quad<S: Real>(c: &[f64; 3], t: S) -> S {
        S::cst(c[0]) + t.scale(c[1]) + (t * t).scale(c[2])
    }

    pub fn residual_generic<S: Real>(&self, t: S) -> S {
        Self::quad(&self.u, t)
            .min_of(Self::quad(&self.v, t))
            .abs_val()
    }

    pub fn residual(&self, t: f64) -> f64 {
        self.residual_generic(t)
    }

    pub fn f(&self, t: f64) -> f64 {
        Self::quad(&self.objective, t)
    }
}

/// Either document kind accepted by the problem-file loader.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Problem {
    Mpec(MpecProblem),
    ScalarPair(ScalarPairProblem),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDocument {
    #[serde(default)]
    pub xx: Vec<Vec<f64>>,
    #[serde(default)]
    pub xy: Vec<Vec<f64>>,
    #[serde(default)]
    pub yy: Vec<Vec<f64>>,
    #[serde(default)]
    pub x_lin: Vec<f64>,
    #[serde(default)]
    pub y_lin: Vec<f64>,
    #[serde(rename = "const", default)]
    pub constant: f64,
}

/// On-disk form of an [`MpecProblem`]. Empty objective blocks mean zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "M")]
    pub lcp_matrix: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    pub q0: Vec<f64>,
    pub objective: ObjectiveDocument,
    pub x_box: Vec<[f64; 2]>,
    pub multiplier_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl ProblemDocument {
    pub fn into_problem(self) -> Result<MpecProblem> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::Schema("`n` and `m` must be at least 1".into()));
        }
        let lcp_matrix = matrix_from_rows("M", &self.lcp_matrix, m, m)?;
        if self.q0.len() != m {
            return Err(Error::dims("q0 (order of M)", m, self.q0.len()));
        }
        let q_mat = matrix_from_rows("Q", &self.q_mat, m, n)?;
        let o = &self.objective;
        let block = |name: &str, rows: &Vec<Vec<f64>>, r: usize, c: usize| {
            if rows.is_empty() {
                Ok(DMatrix::zeros(r, c))
            } else {
                matrix_from_rows(name, rows, r, c)
            }
        };
        let lin = |v: &Vec<f64>, len: usize| {
            if v.is_empty() {
                DVector::zeros(len)
            } else {
                DVector::from_column_slice(v)
            }
        };
        let objective = QuadObjective {
            xx: block("objective.xx", &o.xx, n, n)?,
            xy: block("objective.xy", &o.xy, n, m)?,
            yy: block("objective.yy", &o.yy, m, m)?,
            x_lin: lin(&o.x_lin, n),
            y_lin: lin(&o.y_lin, m),
            constant: o.constant,
        };
        let qmap = AffineParamMap::new(q_mat, DVector::from_column_slice(&self.q0))?;
        let x_box = self.x_box.iter().map(|b| (b[0], b[1])).collect();
        build_lcp_mpec(lcp_matrix, qmap, objective, x_box, self.multiplier_bound)
    }
}

#[derive(Deserialize)]
struct ScalarPairDocument {
    objective: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
    t_box: [f64; 2],
}

fn json_value(text: &str) -> Result<serde_json::Value> {
    if text.trim().is_empty() {
        return Err(Error::Schema("empty document".into()));
    }
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn schema<E: std::fmt::Display>(e: E) -> Error {
    Error::Schema(e.to_string())
}

/// Parses a problem document of either kind.
pub fn parse_problem_str(text: &str) -> Result<Problem> {
    let value = json_value(text)?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_owned);
    match kind.as_deref() {
        None | Some("lcp-mpec") => {
            let doc: ProblemDocument = serde_json::from_value(value).map_err(schema)?;
            // Validation failures (dimension mismatches, bad boxes) are schema
            // errors from the file's point of view.
            doc.into_problem().map(Problem::Mpec).map_err(|e| match e {
                Error::Schema(_) => e,
                other => Error::Schema(other.to_string()),
            })
        }
        Some("scalar-pair") => {
            let doc: ScalarPairDocument = serde_json::from_value(value).map_err(schema)?;
            ScalarPairProblem::new(doc.objective, doc.u, doc.v, doc.t_box)
                .map(Problem::ScalarPair)
                .map_err(schema)
        }
        Some(other) => Err(Error::Schema(format!("unknown problem kind `{other}`"))),
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse_problem_str(&text)
}

/// Reads an LCP-MPEC problem file.
pub fn parse_problem_file(path: impl AsRef<Path>) -> Result<MpecProblem> {
    match load_problem(path)? {
        Problem::Mpec(p) => Ok(p),
        Problem::ScalarPair(_) => Err(Error::Schema(
            "expected an LCP-MPEC document, found `scalar-pair`".into(),
        )),
    }
}

pub fn serialize_problem(problem: &MpecProblem) -> String {
    serde_json::to_string_pretty(&problem.to_document())
        .expect("problem documents always serialize")
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>> {
    if rows.len() != r {
        return Err(Error::dims(format!("rows of {name}"), r, rows.len()));
    }
    for row in rows {
        if row.len() != c {
            return Err(Error::dims(format!("columns of {name}"), c, row.len()));
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn validate_box(b: &[(f64, f64)]) -> Result<()> {
    for (index, &(lo, hi)) in b.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::NonFinite(format!("box interval {index}")));
        }
        if lo.is_infinite() || hi.is_infinite() {
            return Err(Error::UnboundedBox { index });
        }
        if lo > hi {
            return Err(Error::EmptyInterval { index, lo, hi });
        }
    }
    Ok(())
}

fn check_finite<'a>(what: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    if it.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
