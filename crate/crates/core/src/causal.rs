//! Average treatment effect estimators and bootstrap percentile intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_glm_columns, Dataset, ModelFit, Target};
use crate::exec;
use crate::rng::{self, Stream};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Standardization,
    Ipw,
    Aipw,
    Unadjusted,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Self::Standardization, Self::Ipw, Self::Aipw, Self::Unadjusted];

    fn needs_outcome_model(self) -> bool {
        matches!(self, Self::Standardization | Self::Aipw)
    }

    fn needs_propensity(self) -> bool {
        matches!(self, Self::Ipw | Self::Aipw)
    }
}

/// Bounds applied to fitted propensities before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clip {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Clip {
    fn default() -> Self {
        Self { lower: 0.01, upper: 0.99 }
    }
}

impl Clip {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper < 1.0) {
            return Err(Error::param(
                "clip",
                format!("need 0 < lower < upper < 1, got [{}, {}]", self.lower, self.upper),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, e: f64) -> f64 {
        e.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimate: f64,
    pub estimator: Estimator,
    pub selected: Vec<usize>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub n_boot: Option<usize>,
    /// Resamples excluded because the pipeline failed on them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_resamples: Option<usize>,
}

/// Fitted nuisance values per unit.
#[derive(Debug, Clone, Default)]
pub struct Nuisances {
    /// `E[Y | A = 0, X]`.
    pub mu0: Vec<f64>,
    /// `E[Y | A = 1, X]`.
    pub mu1: Vec<f64>,
    /// Clipped `P(A = 1 | X)`.
    pub propensity: Vec<f64>,
}

fn outcome_predictions(data: &Dataset, fit: &ModelFit) -> (Vec<f64>, Vec<f64>) {
    (0..data.n())
        .map(|i| {
            let f = |a| fit.family.inverse_link(fit.linear_predictor(data, i, a));
            (f(0.0), f(1.0))
        })
        .unzip()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Plugs fitted nuisances into an estimator's formula.
pub fn ate_from_nuisances(y: &[f64], a: &[f64], nu: &Nuisances, estimator: Estimator) -> f64 {
    let n = y.len();
    match estimator {
        Estimator::Unadjusted => {
            let treated = a.iter().filter(|&&v| v == 1.0).count() as f64;
            let (s1, s0) = y.iter().zip(a).fold(
                (0.0, 0.0),
                |(s1, s0), (&yi, &ai)| {
                    if ai == 1.0 {
                        (s1 + yi, s0)
                    } else {
                        (s1, s0 + yi)
                    }
                },
            );
            s1 / treated - s0 / (n as f64 - treated)
        }
        Estimator::Standardization => mean((0..n).map(|i| nu.mu1[i] - nu.mu0[i])),
        Estimator::Ipw => mean((0..n).map(|i| {
            let e = nu.propensity[i];
            a[i] * y[i] / e - (1.0 - a[i]) * y[i] / (1.0 - e)
        })),
        Estimator::Aipw => mean((0..n).map(|i| {
            let e = nu.propensity[i];
            let treated = a[i] * (y[i] - nu.mu1[i]) / e + nu.mu1[i];
            let control = (1.0 - a[i]) * (y[i] - nu.mu0[i]) / (1.0 - e) + nu.mu0[i];
            treated - control
        })),
    }
}

fn check_inputs(data: &Dataset, selected: &[usize]) -> Result<()> {
    if let Some(&j) = selected.iter().find(|&&j| j >= data.p()) {
        return Err(Error::Dimension(format!("selected index {j} out of range for p = {}", data.p())));
    }
    let (control, treated) = data.arm_sizes();
    if control == 0 {
        return Err(Error::EmptyArm { arm: "control" });
    }
    if treated == 0 {
        return Err(Error::EmptyArm { arm: "treated" });
    }
    Ok(())
}

/// Several estimators from one pair of nuisance fits.
pub fn estimate_ate_many(
    data: &Dataset,
    selected: &[usize],
    estimators: &[Estimator],
    clip: Clip,
) -> Result<Vec<AteEstimate>> {
    clip.validate()?;
    check_inputs(data, selected)?;
    let mut cols = selected.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mut nu = Nuisances::default();
    if estimators.iter().any(|e| e.needs_outcome_model()) {
        let fit = fit_glm_columns(data, Target::Outcome, &cols)?;
        (nu.mu0, nu.mu1) = outcome_predictions(data, &fit);
    }
    if estimators.iter().any(|e| e.needs_propensity()) {
        let fit = fit_glm_columns(data, Target::Treatment, &cols)?;
        nu.propensity =
            (0..data.n()).map(|i| clip.apply(fit.family.inverse_link(fit.linear_predictor(data, i, 0.0)))).collect();
    }
    Ok(estimators
        .iter()
        .map(|&estimator| AteEstimate {
            estimate: ate_from_nuisances(data.y(), data.a(), &nu, estimator),
            estimator,
            selected: cols.clone(),
            ci_lower: None,
            ci_upper: None,
            n_boot: None,
            failed_resamples: None,
        })
        .collect())
}

/// Fits the nuisance models on `selected` by full-sample MLE and applies
/// `estimator`, with the default propensity clip.
pub fn estimate_ate(data: &Dataset, selected: &[usize], estimator: Estimator) -> Result<AteEstimate> {
    Ok(estimate_ate_many(data, selected, &[estimator], Clip::default())?.remove(0))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of a full selection-then-estimation pipeline.
///
/// `pipeline(data, seed)` is run once on the original data with `seed`, and
/// on each resample `b` with a seed derived from `(seed, b)`. Failed
/// resamples are excluded; more than 10% failures is an error.
pub fn bootstrap_ci<F>(data: &Dataset, pipeline: F, n_boot: usize, level: f64, seed: u64) -> Result<AteEstimate>
where
    F: Fn(&Dataset, u64) -> Result<AteEstimate> + Sync + Send,
{
    if n_boot < 100 {
        return Err(Error::param("n_boot", format!("need at least 100 resamples, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", format!("must lie in (0, 1), got {level}")));
    }
    let mut point = pipeline(data, seed)?;
    let n = data.n();
    let draws = exec::map_indexed(n_boot, |b| {
        let child = rng::mix(seed, b as u64 + 1);
        let mut r = rng::rng(child, Stream::Bootstrap);
        let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        pipeline(&data.subset_rows(&idx), child).ok().map(|e| e.estimate).filter(|v| v.is_finite())
    });
    let mut ok: Vec<f64> = draws.into_iter().flatten().collect();
    let failed = n_boot - ok.len();
    if failed * 10 > n_boot {
        return Err(Error::BootstrapFailures { failed, total: n_boot });
    }
    ok.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    point.ci_lower = Some(quantile_sorted(&ok, tail));
    point.ci_upper = Some(quantile_sorted(&ok, 1.0 - tail));
    point.n_boot = Some(n_boot);
    point.failed_resamples = Some(failed);
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{expit, Family};
    use nalgebra::DMatrix;
    use rand_distr::StandardNormal;

    fn confounded(n: usize, seed: u64, family: Family) -> Dataset {
        let mut r = rng::rng(seed, Stream::Data);
        let x = DMatrix::from_fn(n, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let a: Vec<f64> = (0..n).map(|i| f64::from(r.random::<f64>() < expit(x[(i, 0)]))).collect();
        let y = (0..n)
            .map(|i| {
                let eta = a[i] + x[(i, 0)] + 0.5 * x[(i, 1)];
                match family {
                    Family::Gaussian => eta + r.sample::<f64, _>(StandardNormal),
                    Family::Binomial => f64::from(r.random::<f64>() < expit(eta)),
                }
            })
            .collect();
        Dataset::new(y, a, x, family).unwrap()
    }

    #[test]
    fn standardization_equals_ols_treatment_coefficient() {
        let d = confounded(300, 1, Family::Gaussian);
        let fit = fit_glm_columns(&d, Target::Outcome, &[0, 1]).unwrap();
        let est = estimate_ate(&d, &[1, 0], Estimator::Standardization).unwrap();
        assert!((est.estimate - fit.treatment_coef.unwrap()).abs() < 1e-10);
        assert_eq!(est.selected, vec![0, 1]);
    }

    #[test]
    fn empty_selection_standardization_is_unadjusted() {
        let d = confounded(200, 2, Family::Gaussian);
        let s = estimate_ate(&d, &[], Estimator::Standardization).unwrap().estimate;
        let u = estimate_ate(&d, &[], Estimator::Unadjusted).unwrap().estimate;
        assert!((s - u).abs() < 1e-10);
    }

    #[test]
    fn adjustment_removes_confounding_bias() {
        let d = confounded(4000, 3, Family::Gaussian);
        let u = estimate_ate(&d, &[], Estimator::Unadjusted).unwrap().estimate;
        assert!(u > 1.3, "unadjusted {u}");
        for e in [Estimator::Standardization, Estimator::Ipw, Estimator::Aipw] {
            let v = estimate_ate(&d, &[0], e).unwrap().estimate;
            assert!((v - 1.0).abs() < 0.15, "{e:?} {v}");
        }
    }

    #[test]
    fn binary_outcome_estimators_agree_roughly() {
        let d = confounded(4000, 4, Family::Binomial);
        let all = estimate_ate_many(&d, &[0, 1], &Estimator::ALL, Clip::default()).unwrap();
        let std = all[0].estimate;
        assert!((all[2].estimate - std).abs() < 0.03);
        assert!((all[1].estimate - std).abs() < 0.05);
        assert!(std > 0.1 && std < 0.3);
    }

    #[test]
    fn input_checks() {
        let d = confounded(50, 5, Family::Gaussian);
        assert!(matches!(estimate_ate(&d, &[2], Estimator::Aipw), Err(Error::Dimension(_))));
        let treated_only = Dataset::new(d.y().to_vec(), vec![1.0; 50], d.x().clone(), Family::Gaussian).unwrap();
        assert!(matches!(estimate_ate(&treated_only, &[], Estimator::Ipw), Err(Error::EmptyArm { arm: "control" })));
        assert!(Clip { lower: 0.5, upper: 0.4 }.validate().is_err());
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    fn constant(_: &Dataset, _: u64) -> Result<AteEstimate> {
        Ok(AteEstimate {
            estimate: 2.5,
            estimator: Estimator::Unadjusted,
            selected: vec![],
            ci_lower: None,
            ci_upper: None,
            n_boot: None,
            failed_resamples: None,
        })
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let d = confounded(60, 6, Family::Gaussian);
        let c = bootstrap_ci(&d, constant, 100, 0.95, 1).unwrap();
        assert_eq!((c.ci_lower, c.ci_upper), (Some(2.5), Some(2.5)));
        let pipe = |d: &Dataset, _: u64| estimate_ate(d, &[0], Estimator::Aipw);
        let b1 = bootstrap_ci(&d, pipe, 120, 0.9, 7).unwrap();
        let b2 = bootstrap_ci(&d, pipe, 120, 0.9, 7).unwrap();
        assert_eq!(b1, b2);
        assert!(b1.ci_lower.unwrap() <= b1.ci_upper.unwrap());
        assert!(bootstrap_ci(&d, constant, 99, 0.95, 1).is_err());
    }

    #[test]
    fn bootstrap_failure_budget() {
        let d = confounded(60, 7, Family::Gaussian);
        let flaky =
            |_: &Dataset, s: u64| if s.is_multiple_of(4) { Err(Error::singular("test")) } else { constant(&d, s) };
        assert!(matches!(bootstrap_ci(&d, flaky, 200, 0.95, 3), Err(Error::BootstrapFailures { .. })));
    }
}
