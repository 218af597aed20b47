//! Zono-conformal prediction.
//!
//! A trained tanh network `f` is wrapped with zonotopic prediction sets
//! `⟨f(x), D̄(x) G_u diag(α)⟩`, where `D̄(x)` is the Jacobian of the output
//! with respect to a chosen set of additive uncertainties and the scaling
//! factors `α` come from a single calibration linear program. The crate also
//! ships outlier removal, scenario coverage bounds, split-conformal and
//! interval-predictor baselines, synthetic data generators and the
//! evaluation metrics used to compare them.

pub mod baselines;
pub mod calibrate;
pub mod coverage;
pub mod data;
pub mod error;
pub mod eval;
pub mod lp;
pub mod mlp;
pub mod outliers;
pub mod placement;
pub mod sweep;
pub mod zonotope;

pub use error::{Error, Result};
pub use zonotope::Zonotope;

/// Dense matrix and vector types used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

#[cfg(test)]
pub(crate) mod testutil;
