//! Outcome and treatment model fitting.
//!
//! The outcome model regresses `y` on the treatment and the covariates, the
//! treatment model regresses `a` on the covariates (always logistic). Three
//! backends produce per-covariate coefficients with standard errors: plain
//! maximum likelihood, the lasso with GLM-style standard errors, and
//! cross-fitting (lasso screening on one half, MLE refit on the other).

mod crossfit;
mod glm;
mod lasso;

pub use crossfit::fit_crossfit;
pub use glm::fit_glm;
pub(crate) use glm::fit_glm_columns;
pub use lasso::{fit_lasso, lambda_grid, lasso_path, LassoConfig, LassoPathPoint};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Gaussian response, identity link.
    Gaussian,
    /// Binary response, logit link.
    Binomial,
}

impl Family {
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => expit(eta),
        }
    }
}

pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Outcome,
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Mle,
    Lasso,
    Crossfit,
}

pub type Backend = FitMethod;

/// Observed data: outcome, binary treatment, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<f64>,
    x: DMatrix<f64>,
    family: Family,
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<f64>, x: DMatrix<f64>, family: Family) -> Result<Self> {
        let n = y.len();
        if a.len() != n || x.nrows() != n {
            return Err(Error::Dimension(format!("y has {n} rows, a has {}, x has {}", a.len(), x.nrows())));
        }
        if n < 2 {
            return Err(Error::Dimension(format!("need at least 2 rows, got {n}")));
        }
        if x.ncols() < 1 {
            return Err(Error::Dimension("need at least one covariate".into()));
        }
        if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(format!("treatment must be 0/1, row {i} has {}", a[i])));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("outcome row {i} is not finite")));
        }
        if family == Family::Binomial {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidData(format!("binomial outcome must be 0/1, row {i} has {}", y[i])));
            }
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("covariate entry (row {}, column {}) is not finite", k % n, k / n)));
        }
        Ok(Self { y, a, x, family })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Response and family for a model target.
    pub fn response(&self, target: Target) -> (&[f64], Family) {
        match target {
            Target::Outcome => (&self.y, self.family),
            Target::Treatment => (&self.a, Family::Binomial),
        }
    }

    /// Rows `idx` (in that order, repeats allowed) as a new dataset.
    pub fn subset_rows(&self, idx: &[usize]) -> Dataset {
        let p = self.p();
        let n = self.n();
        let src = self.x.as_slice();
        let mut data = Vec::with_capacity(idx.len() * p);
        for j in 0..p {
            let col = &src[j * n..(j + 1) * n];
            data.extend(idx.iter().map(|&i| col[i]));
        }
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x: DMatrix::from_vec(idx.len(), p, data),
            family: self.family,
        }
    }

    pub fn arm_sizes(&self) -> (usize, usize) {
        let treated = self.a.iter().filter(|&&v| v == 1.0).count();
        (self.n() - treated, treated)
    }
}

/// One fitted model. `coef` and `se` always have length `p`; covariates not
/// in the model (or flagged) carry `coef = 0` and `se = None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub coef: Vec<f64>,
    pub se: Vec<Option<f64>>,
    pub intercept: f64,
    /// Present iff this is an outcome-model fit.
    pub treatment_coef: Option<f64>,
    pub treatment_se: Option<f64>,
    pub family: Family,
    pub method: FitMethod,
    pub converged: bool,
}

impl ModelFit {
    pub fn p(&self) -> usize {
        self.coef.len()
    }

    /// Linear predictor for row `i`, with the treatment set to `a`.
    pub fn linear_predictor(&self, data: &Dataset, i: usize, a: f64) -> f64 {
        let n = data.n();
        let x = data.x().as_slice();
        let mut eta = self.intercept + self.treatment_coef.unwrap_or(0.0) * a;
        for (j, &b) in self.coef.iter().enumerate() {
            if b != 0.0 {
                eta += b * x[j * n + i];
            }
        }
        eta
    }

    /// `coef / se` with unavailable standard errors mapped to 0.
    pub fn standardized(&self) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.se)
            .map(|(&c, se)| match se {
                Some(s) if *s > 0.0 && s.is_finite() => c / s,
                _ => 0.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualFit {
    pub outcome: ModelFit,
    pub treatment: ModelFit,
}

impl DualFit {
    pub fn p(&self) -> usize {
        self.outcome.p()
    }
}

/// Fits both models on `data` with the chosen backend. `seed` drives the
/// cross-fit split and lasso CV folds.
pub fn fit_dual(data: &Dataset, backend: Backend, seed: u64, cfg: &LassoConfig) -> Result<DualFit> {
    let fit = |target| match backend {
        FitMethod::Mle => fit_glm(data, target),
        FitMethod::Lasso => {
            let cfg = LassoConfig { cv_seed: crate::rng::mix(seed, target as u64), ..cfg.clone() };
            fit_lasso(data, target, cfg.lambda, &cfg)
        }
        FitMethod::Crossfit => fit_crossfit(data, target, crate::rng::mix(seed, target as u64), cfg),
    };
    Ok(DualFit { outcome: fit(Target::Outcome)?, treatment: fit(Target::Treatment)? })
}

/// Per-split standardized coefficient vectors: column 0 is the treatment
/// model, column 1 the outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedPair {
    pub t1: Vec<[f64; 2]>,
    pub t2: Vec<[f64; 2]>,
}

impl StandardizedPair {
    pub fn p(&self) -> usize {
        self.t1.len()
    }

    pub fn swapped(&self) -> Self {
        Self { t1: self.t2.clone(), t2: self.t1.clone() }
    }
}

pub fn standardize_pair(fit1: &DualFit, fit2: &DualFit) -> Result<StandardizedPair> {
    let p = fit1.p();
    if fit1.treatment.p() != p || fit2.p() != p || fit2.treatment.p() != p {
        return Err(Error::Dimension(format!(
            "fits disagree on p: {}, {}, {}, {}",
            fit1.outcome.p(),
            fit1.treatment.p(),
            fit2.outcome.p(),
            fit2.treatment.p()
        )));
    }
    let rows = |fit: &DualFit| -> Vec<[f64; 2]> {
        let ta = fit.treatment.standardized();
        let ty = fit.outcome.standardized();
        ta.into_iter().zip(ty).map(|(a, y)| [a, y]).collect()
    };
    Ok(StandardizedPair { t1: rows(fit1), t2: rows(fit2) })
}
