//! Named study configurations for the standard scenarios.

use super::{MethodConfig, MethodSpec, ScenarioSpec, SplitProcedure, StudyConfig, XDist};
use crate::baselines::{Adjustment, PValueSource};
use crate::causal::{Clip, Estimator};
use crate::estimation::{Family, FitMethod, LassoConfig};
use crate::mirrors::{Criterion, Strategy, DEFAULT_REPEATS};

pub const PRESETS: [&str; 7] = [
    "growth-gaussian",
    "growth-binary",
    "lowdim-fixed",
    "lowdim-fixed-binary-x",
    "highdim-p500",
    "highdim-p1000",
    "highdim-p1500",
];

const BASE_SEED: u64 = 0x5EED;

fn mirror(label: &str, criterion: Criterion, procedure: SplitProcedure, backend: FitMethod) -> MethodConfig {
    MethodConfig {
        label: label.into(),
        method: MethodSpec::Mirror {
            strategy: Strategy::unified(criterion),
            procedure,
            backend,
            q: 0.1,
            repeats: (procedure == SplitProcedure::Mds).then_some(DEFAULT_REPEATS),
        },
    }
}

fn qvalue(label: &str, source: PValueSource, criterion: Criterion) -> MethodConfig {
    MethodConfig {
        label: label.into(),
        method: MethodSpec::Qvalue { source, adjustment: Adjustment::Bh, criterion, q: 0.1 },
    }
}

fn study(scenario: ScenarioSpec, methods: Vec<MethodConfig>, estimators: Vec<Estimator>, n_reps: usize) -> StudyConfig {
    StudyConfig {
        scenario,
        methods,
        estimators,
        n_reps,
        base_seed: BASE_SEED,
        lasso: LassoConfig::default(),
        clip: Clip::default(),
    }
}

fn growth(family: Family) -> StudyConfig {
    study(
        ScenarioSpec::random_signs(2000, 100, family),
        vec![
            mirror("ds-unified-or", Criterion::Or, SplitProcedure::Ds, FitMethod::Crossfit),
            mirror("ds-unified-and", Criterion::And, SplitProcedure::Ds, FitMethod::Crossfit),
        ],
        Vec::new(),
        30,
    )
}

fn lowdim(x_dist: XDist) -> StudyConfig {
    let paired = MethodConfig {
        label: "mds-paired-or".into(),
        method: MethodSpec::Mirror {
            strategy: Strategy::Paired { criterion: Criterion::Or },
            procedure: SplitProcedure::Mds,
            backend: FitMethod::Crossfit,
            q: 0.1,
            repeats: Some(DEFAULT_REPEATS),
        },
    };
    study(
        ScenarioSpec::fixed_table(1000, 90, Family::Gaussian, x_dist),
        vec![
            mirror("mds-unified-or", Criterion::Or, SplitProcedure::Mds, FitMethod::Crossfit),
            mirror("mds-unified-and", Criterion::And, SplitProcedure::Mds, FitMethod::Crossfit),
            paired,
            qvalue("bhq-joint-or", PValueSource::JointMle, Criterion::Or),
            qvalue("bhq-marginal-or", PValueSource::Marginal, Criterion::Or),
            MethodConfig { label: "oracle-or".into(), method: MethodSpec::Oracle { criterion: Criterion::Or } },
            MethodConfig { label: "unadjusted".into(), method: MethodSpec::Empty },
        ],
        Estimator::ALL.to_vec(),
        100,
    )
}

fn highdim(p: usize) -> StudyConfig {
    study(
        ScenarioSpec::fixed_table(1000, p, Family::Gaussian, XDist::Gaussian),
        vec![
            mirror("mds-unified-or", Criterion::Or, SplitProcedure::Mds, FitMethod::Lasso),
            mirror("mds-unified-and", Criterion::And, SplitProcedure::Mds, FitMethod::Lasso),
            qvalue("bhq-marginal-or", PValueSource::Marginal, Criterion::Or),
            qvalue("bhq-crossfit-or", PValueSource::Crossfit, Criterion::Or),
        ],
        vec![Estimator::Aipw, Estimator::Unadjusted],
        30,
    )
}

/// Expands a preset name into a full study configuration.
pub fn preset(name: &str) -> Option<StudyConfig> {
    Some(match name {
        "growth-gaussian" => growth(Family::Gaussian),
        "growth-binary" => growth(Family::Binomial),
        "lowdim-fixed" => lowdim(XDist::Gaussian),
        "lowdim-fixed-binary-x" => lowdim(XDist::Binary),
        "highdim-p500" => highdim(500),
        "highdim-p1000" => highdim(1000),
        "highdim-p1500" => highdim(1500),
        _ => return None,
    })
}
