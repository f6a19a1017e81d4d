//! Stochastic proximal point methods with learned correction.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: small dense linear algebra and seeded randomness,
//! * [`problem`]: the regularized least-squares finite sum, its proximal
//!   operators, minimizer and the constants the rates consume,
//! * [`sampling`]: arbitrary samplings over subsets of `[n]`,
//! * [`engine`]: the universal proximal loop and its seven correction rules,
//! * [`theory`]: parametric recursion constants, rate certificates, stepsize
//!   selectors and iteration complexities,
//! * [`verify`]: independent oracles and empirical checkers.
//!
//! Function indices are zero-based throughout.

// guards written `!(x > 0.0)` also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod numerics;
pub mod problem;
pub mod sampling;
pub mod theory;
pub mod verify;

pub use engine::{ControlState, CorrectionStrategy, EnsembleStats, MethodSpec, StepRecord, Trajectory};
pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
pub use problem::{LambdaRule, ProblemConstants, RegressionProblem};
pub use sampling::Sampler;
pub use theory::{AssumptionParams, RateCertificate, RateConstants};
pub use verify::CheckReport;
