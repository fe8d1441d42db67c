#![allow(dead_code)]

use std::path::PathBuf;

use mpec_penalty::model::{
    load_problem, parse_problem_file, MpecProblem, Problem, ScalarPairProblem,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn mpec(name: &str) -> MpecProblem {
    parse_problem_file(fixture(name)).expect("fixture parses")
}

pub fn toy() -> ScalarPairProblem {
    match load_problem(fixture("q5-toy.mpec")).expect("fixture parses") {
        Problem::ScalarPair(p) => p,
        Problem::Mpec(_) => panic!("q5-toy is a scalar-pair document"),
    }
}

/// The three LCP-MPEC fixtures.
pub fn all_mpecs() -> Vec<(&'static str, MpecProblem)> {
    ["addq1.mpec", "lcp-param.mpec", "bilevel.mpec"]
        .into_iter()
        .map(|n| (n, mpec(n)))
        .collect()
}

/// `(F(x, y), M·y + Q·x + q0)` computed from the raw matrices.
pub fn map_f(p: &MpecProblem, x: &[f64], y: &[f64]) -> Vec<f64> {
    let (m, n) = (p.m(), p.n());
    (0..m)
        .map(|i| {
            let mut s = p.qmap().offset()[i];
            for (j, xj) in x.iter().enumerate().take(n) {
                s += p.qmap().matrix()[(i, j)] * xj;
            }
            for (j, yj) in y.iter().enumerate().take(m) {
                s += p.lcp_matrix()[(i, j)] * yj;
            }
            s
        })
        .collect()
}
