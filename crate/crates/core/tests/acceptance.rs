//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any FAIL.

mod common;

use std::process::Command;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpec_penalty::errorbound_probe::{
    fit_pairs, halfspace, q1_instance, run_probe_fixture, run_q1_ray, sample_cloud, PROBE_FIXTURES,
    R_FLOOR,
};
use mpec_penalty::lcp_oracle::{is_p_matrix, parametric_solution_path, solve_lcp_enumerate};
use mpec_penalty::model::{KktPoint, LcpInstance, MpecProblem};
use mpec_penalty::penalty_solver::{
    check_stationarity, continuation_from, multi_start, penalty_continuation, run_continuation,
    Classification, PenaltyConfig,
};
use mpec_penalty::residuals::{
    grad_penalized_sqrt, kkt_residual, min_dirderiv, min_residual, squared_kkt_residual, Norm,
    ResidualKind, ResidualSpec,
};

use common::{all_mpecs, map_f, mpec, toy};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ray_residual() -> Outcome {
    let lcp = q1_instance();
    let mut worst: f64 = 0.0;
    for t in [1.0, 10.0, 100.0, 1e4] {
        let y = [t, 1.0];
        let r = min_residual(&y, &lcp.w(&y).unwrap(), Norm::L2).unwrap();
        worst = worst.max((r - 5f64.sqrt()).abs());
    }
    let rep = run_q1_ray().unwrap();
    check(
        worst <= 1e-12 && rep.refuted,
        format!("max |r - sqrt 5| = {worst:e}, flags {:?}", rep.flags()),
    )
}

fn dirderiv() -> Outcome {
    let exact = min_dirderiv(0.0, 0.0, 1.0, -2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for k in 0..1000 {
        let u = rng.gen_range(-1.0..1.0);
        let v = if k % 3 == 0 {
            u
        } else {
            rng.gen_range(-1.0..1.0)
        };
        let (du, dv): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let d = min_dirderiv(u, v, du, dv);
        // Secant error vanishes at ties and is at most (du − dv)²·t/|u − v| otherwise.
        let c = if u == v {
            0.0
        } else {
            (du - dv).powi(2) / (u - v).abs()
        };
        for t in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let secant = ((u + t * du).min(v + t * dv) - u.min(v)) / t;
            let rounding = 8.0 * f64::EPSILON * (u.abs() + v.abs() + 1.0) / t;
            if (secant - d).abs() > c * t + rounding {
                bad += 1;
            }
        }
    }
    check(
        exact == -2.0 && bad == 0,
        format!("min_dirderiv(0,0,1,-2) = {exact}, secant violations {bad}/5000"),
    )
}

fn sqrt_necessity() -> Outcome {
    let p = mpec("bilevel.mpec");
    let order1 = ResidualSpec::new(ResidualKind::ProductResidual, Norm::L2, 1.0).unwrap();
    let sqrt = ResidualSpec::new(ResidualKind::ProductResidual, Norm::L2, 0.5).unwrap();
    let origin = KktPoint::new(vec![0.0], vec![0.0], vec![0.0]);
    let mut ok = true;
    let mut escapes = Vec::new();
    for alpha in [1.0, 10.0, 100.0, 1000.0] {
        let cfg = PenaltyConfig {
            alpha0: alpha,
            fixed_alpha: true,
            max_outer: 1,
            residual: order1,
            ..PenaltyConfig::default()
        };
        let rep = continuation_from(&p, &cfg, origin.flatten()).unwrap();
        ok &= rep.final_penalized <= -1.0 / (8.0 * alpha);
        escapes.push(rep.final_penalized);
    }
    let mut worst_phi: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    for alpha in [1.0, 2.0, 4.0, 8.0] {
        ok &= check_stationarity(&p, &origin, alpha, &sqrt).unwrap() == 0.0;
        let cfg = PenaltyConfig {
            alpha0: alpha,
            fixed_alpha: true,
            max_outer: 1,
            residual: sqrt,
            ..PenaltyConfig::default()
        };
        for rep in multi_start(&p, &cfg, 20).unwrap() {
            worst_phi = worst_phi.max(rep.final_penalized.abs());
            if alpha >= 2.0 {
                worst_f = worst_f.max(rep.final_objective.abs());
            }
        }
    }
    ok &= worst_phi <= 1e-3 && worst_f <= 1e-3;
    check(
        ok,
        format!("order-1 values {escapes:?}; sqrt: worst |phi| {worst_phi:e}, worst |f| (alpha >= 2) {worst_f:e}"),
    )
}

/// `y(x)` for a diagonal `M` with positive diagonal.
fn diagonal_lcp_solution(diag: &[f64], q: &[f64]) -> Vec<f64> {
    diag.iter()
        .zip(q)
        .map(|(d, qi)| (-qi / d).max(0.0))
        .collect()
}

fn parametric_lcp() -> Outcome {
    let p = mpec("lcp-param.mpec");
    let path =
        parametric_solution_path(p.lcp_matrix(), p.qmap(), &[vec![0.0], vec![1.0], vec![2.0]])
            .unwrap();
    let expected = [[0.0, 0.0], [0.5, 0.0], [1.0, 1.0]];
    let mut ok = true;
    for (pt, e) in path.iter().zip(&expected) {
        ok &= pt.solutions.len() == 1;
        ok &= pt.solutions.points[0]
            .iter()
            .zip(e)
            .all(|(a, b)| (a - b).abs() <= 1e-10);
    }
    // Grid oracle from the closed-form solution of the diagonal LCP.
    let diag = [2.0, 1.0];
    let mut best = f64::INFINITY;
    for k in 0..=200 {
        let x = k as f64 / 100.0;
        let y = diagonal_lcp_solution(&diag, &[-x, 1.0 - x]);
        best = best.min((x - 1.0).powi(2) + 2.0 * y[0] + y[1]);
    }
    let cfg = PenaltyConfig {
        start: Some(vec![2.0]),
        ..PenaltyConfig::default()
    };
    let rep = penalty_continuation(&p, &cfg).unwrap();
    ok &= rep.classification == Classification::FeasibleMinimizer;
    ok &= rep.final_residual <= 1e-8 && (rep.final_objective - best).abs() <= 1e-3;
    check(
        ok,
        format!(
            "oracle solutions {:?}; continuation residual {:e}, objective {} vs grid {best}",
            path.iter()
                .map(|p| p.solutions.points.clone())
                .collect::<Vec<_>>(),
            rep.final_residual,
            rep.final_objective
        ),
    )
}

fn exponent_recovery() -> Outcome {
    let lin = run_probe_fixture("linear-halfspace", 1000, 0).unwrap();
    let quad = run_probe_fixture("quad-scalar", 1000, 0).unwrap();
    let lcp = run_probe_fixture("lcp-cloud", 1000, 0).unwrap();
    // Independent distance oracle for the LCP cloud: the instance has the
    // unique solution (1/2, 0).
    let cloud = sample_cloud(&[(-1.0, 2.0), (-1.0, 2.0)], 1000, 0).unwrap();
    let dist_ok = lcp.samples.iter().zip(&cloud).all(|(s, y)| {
        let d = ((y[0] - 0.5).powi(2) + y[1].powi(2)).sqrt();
        s.distance.is_some_and(|sd| (sd - d).abs() <= 1e-12)
    });
    let (g1, g2, g3) = (
        lin.estimate.gamma_hat,
        quad.estimate.gamma_hat,
        lcp.estimate.gamma_hat,
    );
    check(
        (g1 - 1.0).abs() <= 1e-6
            && (g2 - 0.5).abs() <= 1e-6
            && (0.9..=1.1).contains(&g3)
            && dist_ok,
        format!("gamma_hat: linear {g1}, quadratic {g2}, LCP cloud {g3}"),
    )
}

fn hoffman() -> Outcome {
    let run = run_probe_fixture("linear-halfspace", 1000, 0).unwrap();
    let tau = run.hoffman.as_ref().unwrap().tau_max_ratio;
    // Analytic distance to {x₁ ≤ 0}.
    let cloud = sample_cloud(&[(-1.0, 1.0), (-1.0, 1.0)], 1000, 0).unwrap();
    let proj_ok = cloud
        .iter()
        .all(|x| (halfspace().distance(x).unwrap() - x[0].max(0.0)).abs() <= 1e-12);
    let mut certified = 0;
    let mut total = 0;
    for name in PROBE_FIXTURES {
        let run = run_probe_fixture(name, 1000, 0).unwrap();
        let pairs = fit_pairs(&run.samples);
        let est = &run.estimate;
        for &(d, r) in &pairs {
            if r > R_FLOOR && d > 0.0 {
                total += 1;
                if d <= (1.0 + 1e-6) * est.tau_max_ratio * r.powf(est.gamma_hat) {
                    certified += 1;
                }
            }
            if let Some(h) = &run.hoffman {
                if r > 0.0 {
                    total += 1;
                    if d <= (1.0 + 1e-9) * h.tau_max_ratio * r {
                        certified += 1;
                    }
                }
            }
        }
    }
    check(
        (tau - 1.0).abs() <= 1e-9 && proj_ok && certified == total,
        format!("half-space tau {tau}; a-posteriori bound holds on {certified}/{total} samples"),
    )
}

fn infeasible_detection() -> Outcome {
    let t = toy();
    let run = |t0: f64| {
        let cfg = PenaltyConfig {
            alpha0: 2.0,
            fixed_alpha: true,
            start: Some(vec![t0]),
            ..PenaltyConfig::default()
        };
        run_continuation(&t, &cfg).unwrap()
    };
    let a = run(3.0);
    let b = run(0.1);
    // Grid oracle: local minimizer of t + 2·√r(t) in the basin of t = 3.
    let phi = |s: f64| s + 2.0 * (s * s).min((s - 3.0).powi(2) + 1.0).sqrt();
    let mut grid_best = (f64::INFINITY, 0.0);
    for k in 0..=240_000 {
        let s = 1.6 + k as f64 * 1e-5;
        if phi(s) < grid_best.0 {
            grid_best = (phi(s), s);
        }
    }
    let ok = a.classification == Classification::InfeasiblePenaltyStationary
        && a.final_residual > 0.5
        && (a.final_point.x[0] - grid_best.1).abs() <= 1e-4
        && b.classification == Classification::FeasibleMinimizer
        && b.final_point.x[0].abs() <= 1e-6;
    check(
        ok,
        format!(
            "t0=3: {:?} at t={} (grid {}) r={}; t0=0.1: {:?} at t={:e}",
            a.classification,
            a.final_point.x[0],
            grid_best.1,
            a.final_residual,
            b.classification,
            b.final_point.x[0]
        ),
    )
}

/// `f + α·√(‖F − λ‖² + Σ λᵢyᵢ)` from the raw problem data.
fn sqrt_penalty(p: &MpecProblem, z: &[f64], alpha: f64) -> f64 {
    let (x, rest) = z.split_at(p.n());
    let (y, lam) = rest.split_at(p.m());
    let f = map_f(p, x, y);
    let r: f64 = f.iter().zip(lam).map(|(a, l)| (a - l).powi(2)).sum::<f64>()
        + y.iter().zip(lam).map(|(a, b)| a * b).sum::<f64>();
    p.objective().value(x, y) + alpha * r.sqrt()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut counted = 0;
    for (_, p) in all_mpecs() {
        let bounds = p.variable_bounds();
        let mut done = 0;
        while done < 100 {
            let z: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            let kz = KktPoint::from_flat(p.n(), p.m(), &z);
            let r = squared_kkt_residual(&p, &kz).unwrap();
            if r <= 1e-3 {
                continue;
            }
            let alpha = rng.gen_range(0.5..10.0);
            let g = grad_penalized_sqrt(&p, &kz, alpha).unwrap();
            let fd: Vec<f64> = (0..z.len())
                .map(|j| {
                    let h = 1e-6 * (1.0 + z[j].abs());
                    let (mut zp, mut zm) = (z.clone(), z.clone());
                    zp[j] += h;
                    zm[j] -= h;
                    (sqrt_penalty(&p, &zp, alpha) - sqrt_penalty(&p, &zm, alpha)) / (2.0 * h)
                })
                .collect();
            let num = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(num / den);
            done += 1;
            counted += 1;
        }
    }
    check(
        worst <= 1e-5,
        format!("worst relative gradient error {worst:e} over {counted} points"),
    )
}

fn random_p_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    let s = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + &s - s.transpose() + DMatrix::identity(m, m) * 0.2
}

/// One-level feasibility checked constraint by constraint.
fn one_level_feasible(p: &MpecProblem, z: &[f64], tol: f64) -> bool {
    let (x, rest) = z.split_at(p.n());
    let (y, lam) = rest.split_at(p.m());
    let f = map_f(p, x, y);
    f.iter().zip(lam).all(|(a, l)| (a - l).abs() <= tol)
        && y.iter().all(|v| *v >= -tol)
        && lam.iter().all(|v| *v >= -tol)
        && y.iter().zip(lam).all(|(a, b)| (a * b).abs() <= tol)
}

fn oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut unique = 0;
    for k in 0..200 {
        let m = 1 + k % 6;
        let mat = random_p_matrix(&mut rng, m);
        assert!(is_p_matrix(&mat).unwrap());
        let q: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<f64>> = mat
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        let lcp = LcpInstance::from_rows(&rows, &q).unwrap();
        let set = solve_lcp_enumerate(&lcp).unwrap();
        if set.len() == 1 {
            let y = &set.points[0];
            let w = lcp.w(y).unwrap();
            let ok = y
                .iter()
                .zip(&w)
                .all(|(a, b)| *a >= -1e-10 && *b >= -1e-10 && (a * b).abs() <= 1e-10);
            if ok {
                unique += 1;
            }
        }
    }

    let spec = ResidualSpec::default();
    let mut mismatches = 0;
    let mut feasible_seen = 0;
    for (_, p) in all_mpecs() {
        let bounds = p.variable_bounds();
        for k in 0..10_000 {
            let mut z: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            if k % 2 == 0 {
                // Feasible point: oracle y at a random x, λ = F(x, y).
                let x = z[..p.n()].to_vec();
                let sols = solve_lcp_enumerate(&p.lcp_at(&x).unwrap()).unwrap();
                let y = sols.points[k / 2 % sols.len()].clone();
                let f = map_f(&p, &x, &y);
                z = x.into_iter().chain(y).chain(f).collect();
                if k % 4 == 0 {
                    let j = rng.gen_range(0..z.len());
                    z[j] += rng.gen_range(-1e-3..1e-3);
                }
            }
            let kz = KktPoint::from_flat(p.n(), p.m(), &z);
            let zero = kkt_residual(&p, &kz, &spec).unwrap() <= 1e-12;
            let feasible = one_level_feasible(&p, &z, 1e-12);
            feasible_seen += feasible as usize;
            if zero != feasible {
                mismatches += 1;
            }
        }
    }
    check(
        unique == 200 && mismatches == 0 && feasible_seen > 0,
        format!("{unique}/200 unique verified solutions; residual/feasibility mismatches {mismatches} ({feasible_seen} feasible points)"),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mpec-penalty");
    let run = || {
        Command::new(bin)
            .args(["reproduce", "all"])
            .output()
            .expect("binary runs")
    };
    let a = run();
    let b = run();
    check(
        a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty(),
        format!(
            "two runs: {} bytes each, identical = {}",
            a.stdout.len(),
            a.stdout == b.stdout
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("ray residual and global-bound refutation", ray_residual),
        ("directional derivative of min", dirderiv),
        ("square-root necessity", sqrt_necessity),
        ("parametric LCP oracle and continuation", parametric_lcp),
        ("exponent recovery", exponent_recovery),
        ("Hoffman baseline and a-posteriori bound", hoffman),
        ("infeasible local minimizer detection", infeasible_detection),
        ("square-root penalty gradient", gradient_check),
        ("oracle property suite", oracle_suite),
        ("deterministic reproduction", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
