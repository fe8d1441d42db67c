//! Command-line front end.
//!
//! Standard output carries only JSON lines or TSV; prose goes to standard
//! error. `solve` exits 0/2/3 by classification and 1 on bad input.

mod reproduce;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::errorbound_probe::{run_probe_fixture, run_q1_ray, tsv_table, PROBE_FIXTURES};
use crate::lcp_oracle::solve_lcp_enumerate;
use crate::model::{load_problem, KktPoint, LcpInstance, Problem};
use crate::penalty_solver::{
    penalized_value, penalty_continuation, run_continuation, Classification, PenaltyConfig,
    PenaltyModel,
};
use crate::residuals::{Norm, ResidualKind, ResidualSpec};

pub use reproduce::{load_cases, run_case, ReproCase, ReproExpected, ReproOutcome, CASE_IDS};

#[derive(Parser, Debug)]
#[command(
    name = "mpec-penalty",
    version,
    about = "Fractional-power penalty continuation for LCP-constrained MPECs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run penalty continuation on a problem file
    Solve(SolveArgs),
    /// Enumerate every solution of LCP(q, M)
    Oracle(OracleArgs),
    /// Error-bound probes
    Probe(ProbeArgs),
    /// Golden reproduction suite
    Reproduce(ReproduceArgs),
    /// Residual and penalized objective at a point
    Residual(ResidualArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ResidualArg {
    Min,
    Product,
    Kkt,
}

#[derive(Args, Debug)]
pub struct SpecFlags {
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value_t = ResidualArg::Kkt)]
    pub residual: ResidualArg,
}

impl SpecFlags {
    fn spec(&self) -> Result<ResidualSpec> {
        let kind = match self.residual {
            ResidualArg::Min => ResidualKind::MinResidual,
            ResidualArg::Product => ResidualKind::ProductResidual,
            ResidualArg::Kkt => ResidualKind::KktComposite,
        };
        let norm = match self.norm {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        };
        ResidualSpec::new(kind, norm, self.gamma)
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub problem: PathBuf,
    #[command(flatten)]
    pub spec: SpecFlags,
    #[arg(long, default_value_t = 1.0)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub growth: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_feas: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps_stat: f64,
    #[arg(long, default_value_t = 12)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_inner: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start point: x only, or the full (x, y, lambda)
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Keep alpha fixed at this value
    #[arg(long)]
    pub alpha_fixed: Option<f64>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Rows separated by `;`, entries by spaces or commas
    #[arg(long = "M", allow_hyphen_values = true)]
    pub matrix: String,
    #[arg(long, allow_hyphen_values = true)]
    pub q: String,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Built-in cloud fixture: linear-halfspace, quad-scalar or lcp-cloud
    #[arg(long, conflicts_with = "ray", required_unless_present = "ray")]
    pub fixture: Option<String>,
    /// Built-in ray: q1
    #[arg(long)]
    pub ray: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the sample table as TSV instead of the JSON summary
    #[arg(long)]
    pub table: bool,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// Case id, or `all`
    #[arg(default_value = "all")]
    pub case: String,
}

#[derive(Args, Debug)]
pub struct ResidualArgs {
    pub problem: PathBuf,
    #[command(flatten)]
    pub spec: SpecFlags,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidValue(format!("`{s}` is not a number")))
        })
        .collect()
}

pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let rows = text
        .split(';')
        .map(parse_vector)
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.is_empty()) {
        return Err(Error::InvalidValue("matrix has an empty row".into()));
    }
    Ok(rows)
}

/// JSON number with integral values printed without a fraction.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        serde_json::to_string(&v).unwrap_or_else(|_| "null".to_string())
    }
}

pub fn fmt_array(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("[{}]", items.join(","))
}

pub fn exit_code(c: Classification) -> i32 {
    match c {
        Classification::FeasibleMinimizer => 0,
        Classification::InfeasiblePenaltyStationary => 2,
        Classification::IterationLimit => 3,
    }
}

/// Runs one command; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Solve(a) => run_solve(&a, out, err),
        Command::Oracle(a) => run_oracle(&a, out, err),
        Command::Probe(a) => run_probe(&a, out),
        Command::Reproduce(a) => reproduce::run_reproduce(&a.case, out, err),
        Command::Residual(a) => run_residual(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

pub fn run_solve(a: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let problem = load_problem(&a.problem)?;
    let config = PenaltyConfig {
        alpha0: a.alpha_fixed.unwrap_or(a.alpha0),
        growth: a.growth,
        eps_feas: a.eps_feas,
        eps_stat: a.eps_stat,
        max_outer: a.max_outer,
        max_inner: a.max_inner,
        residual: a.spec.spec()?,
        seed: a.seed,
        fixed_alpha: a.alpha_fixed.is_some(),
        start: a.start.as_deref().map(parse_vector).transpose()?,
        ..PenaltyConfig::default()
    };
    let report = match &problem {
        Problem::Mpec(p) => penalty_continuation(p, &config)?,
        Problem::ScalarPair(p) => run_continuation(p, &config)?,
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&report).expect("reports serialize")
    )
    .map_err(io)?;
    let _ = writeln!(
        err,
        "{:?} after {} outer rounds: residual {:e}, objective {}",
        report.classification,
        report.alpha_history.len(),
        report.final_residual,
        report.final_objective
    );
    Ok(exit_code(report.classification))
}

pub fn run_oracle(a: &OracleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let rows = parse_matrix(&a.matrix)?;
    let q = parse_vector(&a.q)?;
    let lcp = LcpInstance::from_rows(&rows, &q)?;
    let set = solve_lcp_enumerate(&lcp)?;
    if set.is_empty() {
        writeln!(out, "[]").map_err(io)?;
        let _ = writeln!(
            err,
            "no solution: {} bases explored, {} singular",
            set.bases_explored, set.singular_bases
        );
    } else {
        for p in &set.points {
            writeln!(out, "{}", fmt_array(p)).map_err(io)?;
        }
    }
    Ok(0)
}

pub fn run_probe(a: &ProbeArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(ray) = &a.ray {
        if ray != "q1" {
            return Err(Error::UnknownCase(format!("ray `{ray}`")));
        }
        let rep = run_q1_ray()?;
        if a.table {
            write!(out, "{}", tsv_table("t", &rep.samples)).map_err(io)?;
        } else {
            let summary = json!({
                "ray": "q1",
                "residual_band": rep.residual_band,
                "distance_growth": rep.distance_growth.map(|g| if g.is_finite() { json!(g) } else { json!("inf") }),
                "flags": rep.flags(),
                "notes": rep.notes,
            });
            writeln!(out, "{summary}").map_err(io)?;
        }
        return Ok(0);
    }
    let name = a.fixture.as_deref().unwrap_or_default();
    if !PROBE_FIXTURES.contains(&name) {
        return Err(Error::UnknownCase(format!("probe fixture `{name}`")));
    }
    let run = run_probe_fixture(name, a.count, a.seed)?;
    if a.table {
        write!(out, "{}", tsv_table("sample", &run.samples)).map_err(io)?;
    } else {
        let summary = json!({
            "fixture": run.fixture,
            "gamma_hat": run.estimate.gamma_hat,
            "tau_hat": run.estimate.tau_hat,
            "tau_max_ratio": run.estimate.tau_max_ratio,
            "sample_count": run.estimate.sample_count,
            "r_range": [run.estimate.r_range.0, run.estimate.r_range.1],
            "fit_residual": run.estimate.fit_residual,
            "hoffman_tau": run.hoffman.as_ref().map(|h| h.tau_hat),
            "certified": run.certified,
            "flags": Vec::<String>::new(),
        });
        writeln!(out, "{summary}").map_err(io)?;
    }
    Ok(0)
}

pub fn run_residual(a: &ResidualArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = a.spec.spec()?;
    let x = parse_vector(&a.x)?;
    let opt = |s: &Option<String>| s.as_deref().map(parse_vector).transpose();
    let (z, residual, objective, phi) = match load_problem(&a.problem)? {
        Problem::Mpec(p) => {
            let y = opt(&a.y)?.unwrap_or_else(|| vec![0.0; p.m()]);
            let lambda = opt(&a.lambda)?.unwrap_or_else(|| vec![0.0; p.m()]);
            let point = KktPoint::new(x, y, lambda);
            point.check_dims(&p)?;
            let z = point.flatten();
            let phi = a.alpha.map(|al| penalized_value(&p, &z, al, &spec));
            (z.clone(), p.residual_at(&z, &spec), p.objective_at(&z), phi)
        }
        Problem::ScalarPair(p) => {
            if x.len() != 1 {
                return Err(Error::dims("t", 1, x.len()));
            }
            let phi = a.alpha.map(|al| penalized_value(&p, &x, al, &spec));
            (x.clone(), p.residual_at(&x, &spec), p.objective_at(&x), phi)
        }
    };
    if let Some(alpha) = a.alpha {
        if alpha < 0.0 {
            return Err(Error::InvalidValue("alpha must be nonnegative".into()));
        }
    }
    let line = json!({
        "point": z,
        "residual": residual,
        "objective": objective,
        "penalized": phi,
    });
    writeln!(out, "{line}").map_err(io)?;
    Ok(0)
}
