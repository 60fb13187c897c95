//! FDR-controlled confounder selection with mirror statistics.
//!
//! The crate fits the outcome model `g_Y(E[Y | A, X]) = b0 + tau A + X'beta`
//! and the treatment model `logit P(A = 1 | X) = a0 + X'alpha` on random
//! halves of the data, turns the standardized coefficients into mirror
//! statistics, and selects covariates for the union set (associated with the
//! outcome or the treatment) or the minimal set (associated with both) at a
//! designated false discovery rate. P-value baselines, ATE estimators and a
//! seeded simulation harness are included.

pub mod baselines;
pub mod causal;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod mirrors;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{Dataset, DualFit, Family, FitMethod, ModelFit, StandardizedPair, Target};
