use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{generate, score_selection, Metrics, ScenarioSpec, Truth};
use crate::baselines::{
    crossfit_pvalues, joint_pvalues, marginal_qvalues, qvalue_select, Adjustment, PValueSet, PValueSource,
};
use crate::causal::{estimate_ate_many, quantile_sorted, Clip, Estimator};
use crate::error::{check_q, Error, Result};
use crate::estimation::{FitMethod, LassoConfig};
use crate::exec;
use crate::mirrors::{ds_select_many, mds_select_many, Criterion, Strategy, DEFAULT_REPEATS};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProcedure {
    Ds,
    Mds,
}

/// A selection method evaluated in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    Mirror {
        strategy: Strategy,
        procedure: SplitProcedure,
        backend: FitMethod,
        q: f64,
        /// MDS repeats; ignored for DS.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        repeats: Option<usize>,
    },
    Qvalue {
        source: PValueSource,
        adjustment: Adjustment,
        criterion: Criterion,
        q: f64,
    },
    /// The true set for a criterion.
    Oracle {
        criterion: Criterion,
    },
    /// No covariates.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    pub method: MethodSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub estimators: Vec<Estimator>,
    pub n_reps: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default)]
    pub clip: Clip,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.clip.validate()?;
        if self.n_reps == 0 {
            return Err(Error::param("n_reps", "must be at least 1"));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            if !labels.insert(m.label.as_str()) {
                return Err(Error::param("methods", format!("duplicate label {:?}", m.label)));
            }
            match &m.method {
                MethodSpec::Mirror { strategy, q, repeats, .. } => {
                    strategy.validate()?;
                    check_q(*q)?;
                    if *repeats == Some(0) {
                        return Err(Error::param("repeats", "must be at least 1"));
                    }
                }
                MethodSpec::Qvalue { criterion, q, .. } => {
                    check_q(*q)?;
                    if *criterion == Criterion::SingleModel {
                        return Err(Error::param("criterion", "q-value selection needs OR or AND"));
                    }
                }
                MethodSpec::Oracle { criterion } => {
                    if *criterion == Criterion::SingleModel {
                        return Err(Error::param("criterion", "oracle sets are OR or AND"));
                    }
                }
                MethodSpec::Empty => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(default)]
    pub ate: BTreeMap<Estimator, f64>,
    #[serde(default)]
    pub relative_bias: BTreeMap<Estimator, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ate_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub true_ate: f64,
    pub methods: BTreeMap<String, MethodOutcome>,
}

/// Mean and type-7 quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub failures: usize,
    pub metrics: BTreeMap<String, Summary>,
    pub n_selected: Option<Summary>,
    pub ate: BTreeMap<Estimator, Summary>,
    pub relative_bias: BTreeMap<Estimator, Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub config: StudyConfig,
    pub records: Vec<ReplicationRecord>,
    pub aggregates: BTreeMap<String, MethodSummary>,
}

impl StudyReport {
    pub fn summary(&self, label: &str) -> Option<&MethodSummary> {
        self.aggregates.get(label)
    }

    /// Mean of a metric (one of [`Metrics::FIELDS`]) for a method.
    pub fn mean_metric(&self, label: &str, field: &str) -> Option<f64> {
        Some(self.aggregates.get(label)?.metrics.get(field)?.mean)
    }

    pub fn mean_relative_bias(&self, label: &str, estimator: Estimator) -> Option<f64> {
        Some(self.aggregates.get(label)?.relative_bias.get(&estimator)?.mean)
    }
}

fn backend_code(b: FitMethod) -> u64 {
    match b {
        FitMethod::Mle => 0,
        FitMethod::Lasso => 1,
        FitMethod::Crossfit => 2,
    }
}

fn source_code(s: PValueSource) -> u64 {
    match s {
        PValueSource::JointMle => 0,
        PValueSource::Crossfit => 1,
        PValueSource::Marginal => 2,
    }
}

/// Selections for every method of one replication. Seeds depend only on
/// the replication seed and the method's own settings.
fn select_all(
    cfg: &StudyConfig,
    data: &crate::estimation::Dataset,
    truth: &Truth,
    seed: u64,
) -> Vec<Result<Vec<usize>>> {
    let mut out: Vec<Option<Result<Vec<usize>>>> = vec![None; cfg.methods.len()];
    type Key = (SplitProcedure, FitMethod, usize);
    let mut groups: BTreeMap<Key, Vec<(usize, Strategy, f64)>> = BTreeMap::new();
    type Members = Vec<(usize, Adjustment, Criterion, f64)>;
    let mut sources: BTreeMap<u64, (PValueSource, Members)> = BTreeMap::new();
    for (k, m) in cfg.methods.iter().enumerate() {
        match &m.method {
            MethodSpec::Mirror { strategy, procedure, backend, q, repeats } => {
                let r = match procedure {
                    SplitProcedure::Ds => 1,
                    SplitProcedure::Mds => repeats.unwrap_or(DEFAULT_REPEATS),
                };
                groups.entry((*procedure, *backend, r)).or_default().push((k, *strategy, *q));
            }
            MethodSpec::Qvalue { source, adjustment, criterion, q } => {
                sources.entry(source_code(*source)).or_insert_with(|| (*source, Vec::new())).1.push((
                    k,
                    *adjustment,
                    *criterion,
                    *q,
                ));
            }
            MethodSpec::Oracle { criterion } => {
                out[k] = Some(Ok(match criterion {
                    Criterion::And => truth.intersection(),
                    _ => truth.union(),
                }));
            }
            MethodSpec::Empty => out[k] = Some(Ok(Vec::new())),
        }
    }

    for ((procedure, backend, repeats), members) in groups {
        let group_seed = rng::mix(seed, 0x100 + backend_code(backend));
        let requests: Vec<(Strategy, f64)> = members.iter().map(|m| (m.1, m.2)).collect();
        let res: Result<Vec<Vec<usize>>> = match procedure {
            SplitProcedure::Ds => ds_select_many(data, &requests, backend, &cfg.lasso, group_seed)
                .map(|v| v.into_iter().map(|r| r.selected).collect()),
            SplitProcedure::Mds => mds_select_many(data, &requests, backend, &cfg.lasso, repeats, group_seed)
                .map(|v| v.into_iter().map(|r| r.0.selected).collect()),
        };
        match res {
            Ok(sel) => members.iter().zip(sel).for_each(|(m, s)| out[m.0] = Some(Ok(s))),
            Err(e) => members.iter().for_each(|m| out[m.0] = Some(Err(e.clone()))),
        }
    }

    for (code, (source, members)) in sources {
        let pv: Result<PValueSet> = match source {
            PValueSource::JointMle => joint_pvalues(data),
            PValueSource::Crossfit => crossfit_pvalues(data, rng::mix(seed, 0x200 + code), &cfg.lasso),
            PValueSource::Marginal => marginal_qvalues(data),
        };
        for (k, adjustment, criterion, q) in members {
            out[k] = Some(
                pv.as_ref()
                    .map_err(Clone::clone)
                    .and_then(|pv| Ok(qvalue_select(pv, criterion, adjustment, q)?.selected)),
            );
        }
    }
    out.into_iter().map(|o| o.expect("every method assigned")).collect()
}

fn replicate(cfg: &StudyConfig, r: usize) -> Result<ReplicationRecord> {
    let seed = cfg.base_seed.wrapping_add(r as u64);
    let g = generate(&cfg.scenario, seed)?;
    let selections = select_all(cfg, &g.data, &g.truth, seed);
    let mut methods = BTreeMap::new();
    for (m, sel) in cfg.methods.iter().zip(selections) {
        let outcome = match sel {
            Err(e) => MethodOutcome {
                error: Some(e.to_string()),
                selected: Vec::new(),
                metrics: None,
                ate: BTreeMap::new(),
                relative_bias: BTreeMap::new(),
                ate_error: None,
            },
            Ok(selected) => {
                let metrics = Some(score_selection(&selected, &g.truth));
                let mut ate = BTreeMap::new();
                let mut relative_bias = BTreeMap::new();
                let mut ate_error = None;
                if !cfg.estimators.is_empty() {
                    match estimate_ate_many(&g.data, &selected, &cfg.estimators, cfg.clip) {
                        Ok(list) => {
                            for e in list {
                                if e.estimate.is_finite() {
                                    ate.insert(e.estimator, e.estimate);
                                    if g.true_ate != 0.0 {
                                        relative_bias.insert(e.estimator, (e.estimate - g.true_ate) / g.true_ate);
                                    }
                                }
                            }
                        }
                        Err(e) => ate_error = Some(e.to_string()),
                    }
                }
                MethodOutcome { error: None, selected, metrics, ate, relative_bias, ate_error }
            }
        };
        methods.insert(m.label.clone(), outcome);
    }
    Ok(ReplicationRecord { replication: r, seed, true_ate: g.true_ate, methods })
}

/// Recomputes the per-method aggregates from replication records.
pub fn aggregate(cfg: &StudyConfig, records: &[ReplicationRecord]) -> BTreeMap<String, MethodSummary> {
    let mut out = BTreeMap::new();
    for m in &cfg.methods {
        let outcomes: Vec<&MethodOutcome> = records.iter().filter_map(|r| r.methods.get(&m.label)).collect();
        let ok: Vec<&Metrics> = outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
        let mut metrics = BTreeMap::new();
        for (f, name) in Metrics::FIELDS.iter().enumerate() {
            let v: Vec<f64> = ok.iter().map(|m| m.values()[f]).collect();
            if let Some(s) = Summary::of(&v) {
                metrics.insert(name.to_string(), s);
            }
        }
        let sizes: Vec<f64> = ok.iter().map(|m| m.n_selected as f64).collect();
        let per_estimator = |pick: &dyn Fn(&MethodOutcome) -> &BTreeMap<Estimator, f64>| {
            cfg.estimators
                .iter()
                .filter_map(|e| {
                    let v: Vec<f64> = outcomes.iter().filter_map(|o| pick(o).get(e).copied()).collect();
                    Summary::of(&v).map(|s| (*e, s))
                })
                .collect::<BTreeMap<_, _>>()
        };
        out.insert(
            m.label.clone(),
            MethodSummary {
                failures: outcomes.iter().filter(|o| o.error.is_some()).count(),
                metrics,
                n_selected: Summary::of(&sizes),
                ate: per_estimator(&|o| &o.ate),
                relative_bias: per_estimator(&|o| &o.relative_bias),
            },
        );
    }
    out
}

/// Runs every method on `n_reps` datasets generated with seeds
/// `base_seed + r`. Method failures are recorded, not propagated.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let records = exec::map_indexed(cfg.n_reps, |r| replicate(cfg, r)).into_iter().collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate(cfg, &records);
    Ok(StudyReport { schema_version: SCHEMA_VERSION, config: cfg.clone(), records, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Family;
    use crate::mirrors::FunctionalForm;
    use crate::simulation::XDist;

    fn config(methods: Vec<MethodConfig>, n_reps: usize) -> StudyConfig {
        StudyConfig {
            scenario: ScenarioSpec::fixed_table(300, 50, Family::Gaussian, XDist::Gaussian),
            methods,
            estimators: vec![Estimator::Unadjusted, Estimator::Aipw],
            n_reps,
            base_seed: 10,
            lasso: LassoConfig::default(),
            clip: Clip::default(),
        }
    }

    fn methods() -> Vec<MethodConfig> {
        vec![
            MethodConfig {
                label: "ds-or".into(),
                method: MethodSpec::Mirror {
                    strategy: Strategy::unified(Criterion::Or),
                    procedure: SplitProcedure::Ds,
                    backend: FitMethod::Mle,
                    q: 0.1,
                    repeats: None,
                },
            },
            MethodConfig {
                label: "mds-and".into(),
                method: MethodSpec::Mirror {
                    strategy: Strategy::Unified { criterion: Criterion::And, form: FunctionalForm::MINIMAL_DEFAULT },
                    procedure: SplitProcedure::Mds,
                    backend: FitMethod::Mle,
                    q: 0.2,
                    repeats: Some(3),
                },
            },
            MethodConfig {
                label: "bh-joint".into(),
                method: MethodSpec::Qvalue {
                    source: PValueSource::JointMle,
                    adjustment: Adjustment::Bh,
                    criterion: Criterion::Or,
                    q: 0.1,
                },
            },
            MethodConfig { label: "oracle".into(), method: MethodSpec::Oracle { criterion: Criterion::Or } },
            MethodConfig { label: "none".into(), method: MethodSpec::Empty },
        ]
    }

    #[test]
    fn single_replication_aggregates_equal_record() {
        let report = run_study(&config(methods(), 1)).unwrap();
        let rec = &report.records[0].methods["ds-or"];
        let agg = &report.aggregates["ds-or"];
        let fdp = rec.metrics.unwrap().fdp_or;
        assert_eq!(agg.metrics["fdp_or"], Summary { mean: fdp, q1: fdp, q3: fdp, count: 1 });
        let oracle = &report.records[0].methods["oracle"];
        assert_eq!(oracle.metrics.unwrap().power_or, 1.0);
        assert!(oracle.relative_bias.contains_key(&Estimator::Aipw));
    }

    #[test]
    fn method_order_does_not_matter() {
        let a = run_study(&config(methods(), 2)).unwrap();
        let mut reversed = methods();
        reversed.reverse();
        let b = run_study(&config(reversed, 2)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.aggregates, b.aggregates);
    }

    #[test]
    fn failures_are_recorded() {
        let mut cfg = config(methods(), 1);
        cfg.scenario.p = 300;
        let report = run_study(&cfg).unwrap();
        let joint = &report.records[0].methods["bh-joint"];
        assert!(joint.error.is_some());
        assert_eq!(report.aggregates["bh-joint"].failures, 1);
    }

    #[test]
    fn config_validation() {
        let mut dup = methods();
        dup.push(dup[0].clone());
        assert!(run_study(&config(dup, 1)).is_err());
        assert!(run_study(&config(methods(), 0)).is_err());
    }

    #[test]
    fn report_roundtrips_through_json() {
        let report = run_study(&config(methods(), 1)).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: StudyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
