//! P-value competitors: Wald tests, UIT/IUT composites and BH/BY q-values.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_q, Error, Result};
use crate::estimation::{fit_crossfit, fit_glm, fit_glm_columns, Dataset, DualFit, LassoConfig, ModelFit, Target};
use crate::exec;
use crate::mirrors::{Criterion, Procedure, SelectionResult};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueSource {
    JointMle,
    Crossfit,
    Marginal,
}

/// Per-variable composite p-values for `alpha_j = beta_j = 0`-type tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSet {
    /// Union-intersection test (union set).
    pub p_union: Vec<f64>,
    /// Intersection-union test (minimal set).
    pub p_minimal: Vec<f64>,
    pub source: PValueSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    Bh,
    By,
}

/// Two-sided normal p-value, `2 (1 - Phi(|z|)) = erfc(|z| / sqrt 2)`.
pub fn normal_pvalue(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Wald p-values; coordinates without a usable standard error get 1.
pub fn wald_pvalues(fit: &ModelFit) -> Vec<f64> {
    fit.coef
        .iter()
        .zip(&fit.se)
        .map(|(&c, se)| match se {
            Some(s) if *s > 0.0 && s.is_finite() => normal_pvalue(c / s),
            _ => 1.0,
        })
        .collect()
}

/// `(UIT, IUT)` from the treatment-model and outcome-model p-values.
pub fn combine(p_alpha: f64, p_beta: f64) -> (f64, f64) {
    let lo = p_alpha.min(p_beta);
    (1.0 - (1.0 - lo) * (1.0 - lo), p_alpha.max(p_beta))
}

fn composites(pa: &[f64], pb: &[f64], source: PValueSource) -> PValueSet {
    let (p_union, p_minimal) = pa.iter().zip(pb).map(|(&a, &b)| combine(a, b)).unzip();
    PValueSet { p_union, p_minimal, source }
}

pub fn uit_iut_pvalues(dual: &DualFit, source: PValueSource) -> PValueSet {
    composites(&wald_pvalues(&dual.treatment), &wald_pvalues(&dual.outcome), source)
}

/// Composites from full-data MLE fits of both models.
pub fn joint_pvalues(data: &Dataset) -> Result<PValueSet> {
    let dual = DualFit { outcome: fit_glm(data, Target::Outcome)?, treatment: fit_glm(data, Target::Treatment)? };
    Ok(uit_iut_pvalues(&dual, PValueSource::JointMle))
}

/// Composites from cross-fitted refits; unselected coordinates get 1.
pub fn crossfit_pvalues(data: &Dataset, seed: u64, cfg: &LassoConfig) -> Result<PValueSet> {
    let dual = DualFit {
        outcome: fit_crossfit(data, Target::Outcome, rng::mix(seed, Target::Outcome as u64), cfg)?,
        treatment: fit_crossfit(data, Target::Treatment, rng::mix(seed, Target::Treatment as u64), cfg)?,
    };
    Ok(uit_iut_pvalues(&dual, PValueSource::Crossfit))
}

/// Univariate GLMs per covariate: `y ~ a + x_j` and `a ~ x_j`. A failed
/// fit gives p = 1 for that coordinate.
pub fn marginal_qvalues(data: &Dataset) -> Result<PValueSet> {
    if data.n() < 10 {
        return Err(Error::Dimension(format!("marginal fits need n >= 10, got {}", data.n())));
    }
    let pairs = exec::map_indexed(data.p(), |j| {
        let p = |target| fit_glm_columns(data, target, &[j]).map(|fit| wald_pvalues(&fit)[j]).unwrap_or(1.0);
        (p(Target::Treatment), p(Target::Outcome))
    });
    let (pa, pb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(composites(&pa, &pb, PValueSource::Marginal))
}

fn step_up(p: &[f64], scale: f64) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    let val = |i: usize| if p[i].is_nan() { 1.0 } else { p[i] };
    order.sort_by(|&a, &b| val(b).total_cmp(&val(a)).then(b.cmp(&a)));
    let mut out = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (k, &i) in order.iter().enumerate() {
        let rank = (m - k) as f64;
        running = running.min(scale * m as f64 / rank * val(i));
        out[i] = running.min(1.0);
    }
    out
}

/// Benjamini-Hochberg adjusted p-values.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    step_up(p, 1.0)
}

/// Benjamini-Yekutieli adjusted p-values.
pub fn by_adjust(p: &[f64]) -> Vec<f64> {
    let c: f64 = (1..=p.len()).map(|i| 1.0 / i as f64).sum();
    step_up(p, c)
}

pub fn adjust(p: &[f64], method: Adjustment) -> Vec<f64> {
    match method {
        Adjustment::Bh => bh_adjust(p),
        Adjustment::By => by_adjust(p),
    }
}

/// Selects `{j : adjusted_j <= q}` from the composite matching `criterion`.
pub fn qvalue_select(pvalues: &PValueSet, criterion: Criterion, method: Adjustment, q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let raw = match criterion {
        Criterion::Or => &pvalues.p_union,
        Criterion::And => &pvalues.p_minimal,
        Criterion::SingleModel => return Err(Error::param("criterion", "q-value selection needs OR or AND")),
    };
    let adjusted = adjust(raw, method);
    let selected: Vec<usize> = (0..adjusted.len()).filter(|&j| adjusted[j] <= q).collect();
    let fdp_bound = selected.iter().map(|&j| adjusted[j]).fold(0.0, f64::max);
    Ok(SelectionResult {
        selected,
        threshold: Some(q),
        fdp_bound,
        q,
        criterion,
        procedure: Procedure::QValue,
        mirror: None,
    })
}
