//! Exact fractional-power penalization for mathematical programs with
//! equilibrium constraints whose lower level is a parametric linear
//! complementarity problem, together with tools that check the error bounds
//! those penalties depend on.
//!
//! The crate is organized around six pieces:
//!
//! * [`model`] : problem data (`MpecProblem`, `LcpInstance`, `KktPoint`) and the
//!   JSON problem-file format.
//! * [`residuals`] : min, product and KKT-composite residuals, penalized
//!   objectives, directional derivatives and the square-root penalty gradient.
//! * [`lcp_oracle`] : brute-force complementary-basis enumeration used as
//!   ground truth.
//! * [`penalty_solver`] : projected pattern search wrapped in a penalty
//!   continuation loop, with feasibility classification.
//! * [`errorbound_probe`] : exponent fitting, ray-divergence tests and Hoffman
//!   constants.
//! * [`cli`] : the `mpec-penalty` command-line front end and the reproduction
//!   suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod errorbound_probe;
pub mod lcp_oracle;
pub mod model;
pub mod penalty_solver;
pub mod residuals;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{AffineParamMap, KktPoint, LcpInstance, MpecProblem, QuadObjective};
pub use residuals::{Norm, ResidualKind, ResidualSpec, StationarityForm};
