//! Single (DS) and multiple (MDS) data splitting.

use serde::{Deserialize, Serialize};

use super::statistics::{original_mirror, paired_mirrors, unified_and_mirror, unified_or_mirror};
use super::threshold::{inclusion_rates, select_by_inclusion, select_threshold_set};
use super::{Criterion, FunctionalForm, InclusionRates, MirrorKind, MirrorSet, Procedure, SelectionResult};
use crate::error::{check_q, Error, Result};
use crate::estimation::{fit_dual, standardize_pair, Backend, Dataset, LassoConfig, StandardizedPair, Target};
use crate::exec;
use crate::rng::{self, Stream};

pub const DEFAULT_REPEATS: usize = 30;

/// Which mirror to build from a split pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mirror", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    /// Original mirror from one model's coefficients.
    Original {
        target: Target,
    },
    Paired {
        criterion: Criterion,
    },
    Unified {
        criterion: Criterion,
        form: FunctionalForm,
    },
}

impl Strategy {
    /// Unified mirror with the default form for `criterion`.
    pub fn unified(criterion: Criterion) -> Self {
        Strategy::Unified { criterion, form: FunctionalForm::default_for(criterion) }
    }

    pub fn criterion(&self) -> Criterion {
        match *self {
            Strategy::Original { .. } => Criterion::SingleModel,
            Strategy::Paired { criterion } | Strategy::Unified { criterion, .. } => criterion,
        }
    }

    pub fn kind(&self) -> MirrorKind {
        match self {
            Strategy::Original { .. } => MirrorKind::Original,
            Strategy::Paired { .. } => MirrorKind::Paired,
            Strategy::Unified { .. } => MirrorKind::Unified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Original { .. } => Ok(()),
            Strategy::Paired { criterion } => match criterion {
                Criterion::SingleModel => Err(Error::param("criterion", "paired mirrors need OR or AND")),
                _ => Ok(()),
            },
            Strategy::Unified { criterion, form } => form.validate(criterion),
        }
    }

    /// Builds the mirror set for this strategy.
    pub fn mirrors(&self, pair: &StandardizedPair) -> Result<MirrorSet> {
        match *self {
            Strategy::Original { target } => {
                let k = match target {
                    Target::Treatment => 0,
                    Target::Outcome => 1,
                };
                let t1: Vec<f64> = pair.t1.iter().map(|r| r[k]).collect();
                let t2: Vec<f64> = pair.t2.iter().map(|r| r[k]).collect();
                Ok(MirrorSet::Single { m: original_mirror(&t1, &t2)?, criterion: Criterion::SingleModel })
            }
            Strategy::Paired { criterion } => {
                self.validate()?;
                Ok(paired_mirrors(pair, criterion))
            }
            Strategy::Unified { criterion: Criterion::And, form } => unified_and_mirror(pair, &form),
            Strategy::Unified { form, .. } => unified_or_mirror(pair, &form),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub backend: Backend,
    pub q: f64,
    #[serde(default)]
    pub lasso: LassoConfig,
}

/// Splits the rows at random into halves, fits both models on each half and
/// returns the standardized coefficient vectors.
pub fn split_pair(data: &Dataset, backend: Backend, split_seed: u64, lasso: &LassoConfig) -> Result<StandardizedPair> {
    let n = data.n();
    if n < 20 {
        return Err(Error::Dimension(format!("data splitting needs n >= 20, got {n}")));
    }
    let perm = rng::permutation(n, split_seed, Stream::Split);
    let (first, second) = perm.split_at(n / 2);
    let fit1 = fit_dual(&data.subset_rows(first), backend, rng::mix(split_seed, 1), lasso)?;
    let fit2 = fit_dual(&data.subset_rows(second), backend, rng::mix(split_seed, 2), lasso)?;
    standardize_pair(&fit1, &fit2)
}

/// Thresholds the mirror that `strategy` builds from `pair`.
pub fn select_from_pair(pair: &StandardizedPair, strategy: &Strategy, q: f64) -> Result<SelectionResult> {
    strategy.validate()?;
    let mut r = select_threshold_set(&strategy.mirrors(pair)?, q)?;
    r.mirror = Some(strategy.kind());
    Ok(r)
}

fn check_requests(requests: &[(Strategy, f64)]) -> Result<()> {
    for (s, q) in requests {
        s.validate()?;
        check_q(*q)?;
    }
    Ok(())
}

/// One split, one selection.
pub fn ds_select(data: &Dataset, config: &SelectionConfig, split_seed: u64) -> Result<SelectionResult> {
    let mut out = ds_select_many(data, &[(config.strategy, config.q)], config.backend, &config.lasso, split_seed)?;
    Ok(out.remove(0))
}

/// DS for several strategies and levels sharing the same split and fits.
pub fn ds_select_many(
    data: &Dataset,
    requests: &[(Strategy, f64)],
    backend: Backend,
    lasso: &LassoConfig,
    split_seed: u64,
) -> Result<Vec<SelectionResult>> {
    check_requests(requests)?;
    let pair = split_pair(data, backend, split_seed, lasso)?;
    requests
        .iter()
        .map(|(s, q)| {
            let mut r = select_from_pair(&pair, s, *q)?;
            r.procedure = Procedure::Ds;
            Ok(r)
        })
        .collect()
}

/// Repeats DS with seeds `base_seed + 1 ..= base_seed + repeats` and
/// aggregates the selections through inclusion rates.
pub fn mds_select(
    data: &Dataset,
    config: &SelectionConfig,
    repeats: usize,
    base_seed: u64,
) -> Result<(SelectionResult, InclusionRates)> {
    let mut out =
        mds_select_many(data, &[(config.strategy, config.q)], config.backend, &config.lasso, repeats, base_seed)?;
    Ok(out.remove(0))
}

/// MDS for several strategies and levels. Each repeat fits the models once
/// and every request reuses those fits; repeats run in parallel.
pub fn mds_select_many(
    data: &Dataset,
    requests: &[(Strategy, f64)],
    backend: Backend,
    lasso: &LassoConfig,
    repeats: usize,
    base_seed: u64,
) -> Result<Vec<(SelectionResult, InclusionRates)>> {
    if repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    check_requests(requests)?;
    let per_repeat = exec::map_indexed(repeats, |m| -> Result<Vec<Vec<usize>>> {
        let pair = split_pair(data, backend, base_seed.wrapping_add(m as u64 + 1), lasso)?;
        requests.iter().map(|(s, q)| Ok(select_from_pair(&pair, s, *q)?.selected)).collect()
    });
    let per_repeat = per_repeat.into_iter().collect::<Result<Vec<_>>>()?;
    requests
        .iter()
        .enumerate()
        .map(|(k, (s, q))| {
            let sets: Vec<Vec<usize>> = per_repeat.iter().map(|r| r[k].clone()).collect();
            let rates = inclusion_rates(&sets, data.p())?;
            let mut r = select_by_inclusion(&rates.rates, *q, s.criterion())?;
            r.mirror = Some(s.kind());
            Ok((r, rates))
        })
        .collect()
}
