//! Synthetic scenarios, selection metrics and seeded replication studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Family;

mod generate;
mod presets;
mod study;

pub use generate::{generate, Generated, TableRow, Truth, FIXED_BASE_DIM, FIXED_TABLE};
pub use presets::{preset, PRESETS};
pub use study::{
    run_study, MethodConfig, MethodOutcome, MethodSpec, MethodSummary, ReplicationRecord, SplitProcedure, StudyConfig,
    StudyReport, Summary, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XDist {
    Gaussian,
    /// Gaussian draws thresholded at zero.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefMode {
    /// Random relevance sets with equal-probability signs, redrawn per seed.
    RandomSigns,
    /// The fixed 45-variable coefficient table.
    FixedTable,
}

fn default_rho() -> f64 {
    0.5
}

fn default_block() -> usize {
    5
}

fn default_group() -> usize {
    15
}

/// Generative description of a simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub family: Family,
    pub x_dist: XDist,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_block")]
    pub block_size: usize,
    pub coef_mode: CoefMode,
    pub tau: f64,
    /// Random-signs group sizes.
    #[serde(default = "default_group")]
    pub n_both: usize,
    #[serde(default = "default_group")]
    pub n_outcome_only: usize,
    #[serde(default = "default_group")]
    pub n_treatment_only: usize,
    /// Outcome coefficient base magnitude; family default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_scale: Option<f64>,
    /// Treatment coefficient base magnitude; mode default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_scale: Option<f64>,
}

/// Default treatment effect: the linear-scale value keeps the unadjusted
/// estimator's relative bias near 25% in the fixed design.
pub fn default_tau(family: Family) -> f64 {
    match family {
        Family::Gaussian => 0.15,
        Family::Binomial => 0.5,
    }
}

impl ScenarioSpec {
    pub fn random_signs(n: usize, p: usize, family: Family) -> Self {
        Self {
            n,
            p,
            family,
            x_dist: XDist::Gaussian,
            rho: default_rho(),
            block_size: default_block(),
            coef_mode: CoefMode::RandomSigns,
            tau: default_tau(family),
            n_both: 15,
            n_outcome_only: 15,
            n_treatment_only: 15,
            beta_scale: None,
            alpha_scale: None,
        }
    }

    pub fn fixed_table(n: usize, p: usize, family: Family, x_dist: XDist) -> Self {
        Self { x_dist, coef_mode: CoefMode::FixedTable, ..Self::random_signs(n, p, family) }
    }

    pub fn beta_base(&self) -> f64 {
        self.beta_scale.unwrap_or(match (self.coef_mode, self.family) {
            (CoefMode::RandomSigns, Family::Gaussian) => 0.08,
            (CoefMode::RandomSigns, Family::Binomial) => 0.16,
            (CoefMode::FixedTable, Family::Gaussian) => 0.1,
            (CoefMode::FixedTable, Family::Binomial) => 0.2,
        })
    }

    pub fn alpha_base(&self) -> f64 {
        self.alpha_scale.unwrap_or(match self.coef_mode {
            CoefMode::RandomSigns => 0.16,
            CoefMode::FixedTable => 0.2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::param(name, reason));
        if self.n < 2 {
            return bad("n", format!("need n >= 2, got {}", self.n));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("rho", format!("must lie in (-1, 1), got {}", self.rho));
        }
        if !self.tau.is_finite() {
            return bad("tau", "must be finite".into());
        }
        for (name, v) in [("beta_scale", self.beta_scale), ("alpha_scale", self.alpha_scale)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return bad(name, "must be finite".into());
            }
        }
        if self.block_size == 0 {
            return bad("block_size", "must be positive".into());
        }
        match self.coef_mode {
            CoefMode::RandomSigns => {
                if self.p == 0 || !self.p.is_multiple_of(self.block_size) {
                    return bad("block_size", format!("{} does not divide p = {}", self.block_size, self.p));
                }
                let need = self.n_both + self.n_outcome_only + self.n_treatment_only;
                if need > self.p {
                    return bad("p", format!("{need} relevant variables do not fit in p = {}", self.p));
                }
            }
            CoefMode::FixedTable => {
                if self.block_size < 4 {
                    return bad("block_size", "the fixed table needs blocks of at least 4".into());
                }
                if self.p < FIXED_TABLE.len() {
                    return bad("p", format!("the fixed table needs p >= 45, got {}", self.p));
                }
            }
        }
        Ok(())
    }
}

/// Selection quality against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_selected: usize,
    pub fdp_or: f64,
    pub fdp_and: f64,
    pub power_or: f64,
    pub power_and: f64,
    pub power_only_a: f64,
}

impl Metrics {
    pub const FIELDS: [&'static str; 5] = ["fdp_or", "fdp_and", "power_or", "power_and", "power_only_a"];

    pub fn values(&self) -> [f64; 5] {
        [self.fdp_or, self.fdp_and, self.power_or, self.power_and, self.power_only_a]
    }
}

/// FDP against `S_OR` and `S_AND`, and power for `S_OR`, `S_AND` and the
/// treatment-only set. An empty target set has power 1.
pub fn score_selection(selected: &[usize], truth: &Truth) -> Metrics {
    let mut sel = selected.to_vec();
    sel.sort_unstable();
    sel.dedup();
    let hits = |set: &[usize]| sel.iter().filter(|j| set.binary_search(j).is_ok()).count();
    let fdp = |set: &[usize]| (sel.len() - hits(set)) as f64 / sel.len().max(1) as f64;
    let power = |set: &[usize]| if set.is_empty() { 1.0 } else { hits(set) as f64 / set.len() as f64 };
    let (or, and, only_a) = (truth.union(), truth.intersection(), truth.only_a());
    Metrics {
        n_selected: sel.len(),
        fdp_or: fdp(&or),
        fdp_and: fdp(&and),
        power_or: power(&or),
        power_and: power(&and),
        power_only_a: power(&only_a),
    }
}
