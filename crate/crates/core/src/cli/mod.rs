//! Command-line front end: `select`, `ate` and `simulate`.
//!
//! Settings come from an optional JSON config file, overridden by flags. The
//! effective configuration is echoed into every report, minus the output
//! directory and thread count, which do not affect results. A report can be
//! passed back as `--config` to rerun it.
//!
//! Exit codes: 0 success, 2 configuration or output error, 3 data or schema
//! error, 4 method failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{crossfit_pvalues, joint_pvalues, marginal_qvalues, qvalue_select, Adjustment, PValueSource};
use crate::causal::{bootstrap_ci, estimate_ate_many, AteEstimate, Clip, Estimator};
use crate::error::{check_q, Error};
use crate::estimation::{Dataset, Family, FitMethod, LassoConfig};
use crate::exec;
use crate::mirrors::{
    ds_select_many, mds_select_many, Criterion, InclusionRates, SelectionResult, Strategy, DEFAULT_REPEATS,
};
use crate::simulation::{preset, run_study, MethodSpec, StudyConfig, PRESETS, SCHEMA_VERSION};

mod data;
mod report;

pub use data::{infer_family, read_csv, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("method failure: {0}")]
    Method(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Method(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            Error::InvalidData(_) | Error::EmptyArm { .. } => CliError::Data(e.to_string()),
            Error::Dimension(_) | Error::Singular { .. } | Error::BootstrapFailures { .. } => {
                CliError::Method(e.to_string())
            }
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mirrorsel", version, about = "FDR-controlled confounder selection with mirror statistics")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "MIRRORSEL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select confounders from a CSV file.
    Select(SelectArgs),
    /// Estimate the average treatment effect, selecting confounders first
    /// unless a selected set is given.
    Ate(AteArgs),
    /// Run a simulation study from a preset or a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Single data split.
    Ds,
    /// Multiple data splitting.
    Mds,
    /// MDS with paired mirrors.
    Paired,
    /// MDS with unified mirrors.
    Unified,
    /// Benjamini-Hochberg q-values.
    Bhq,
    /// Benjamini-Yekutieli q-values.
    Byq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mirror {
    Unified,
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SetCriterion {
    /// Union set: covariates related to the outcome or the treatment.
    Or,
    /// Minimal set: covariates related to both.
    And,
}

impl From<SetCriterion> for Criterion {
    fn from(c: SetCriterion) -> Self {
        match c {
            SetCriterion::Or => Criterion::Or,
            SetCriterion::And => Criterion::And,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    /// Binomial when the outcome is 0/1, otherwise gaussian.
    Auto,
    Gaussian,
    Binomial,
}

/// Parses a library enum by its serde (kebab-case) name.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectionFlags {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Binary treatment column.
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyChoice>,
    /// Target FDR level in (0, 1).
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum)]
    pub criterion: Option<SetCriterion>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Mirror family for `ds` and `mds`.
    #[arg(long, value_enum)]
    pub mirror: Option<Mirror>,
    /// Model fitting backend: mle, lasso or crossfit.
    #[arg(long, value_parser = kebab::<FitMethod>)]
    pub backend: Option<FitMethod>,
    /// P-values for `bhq`/`byq`: joint-mle, crossfit or marginal.
    #[arg(long, value_parser = kebab::<PValueSource>)]
    pub pvalue_source: Option<PValueSource>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// MDS repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    /// JSON config file, or a previous report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for report.json and summary.txt. Without it the
    /// summary goes to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub flags: SelectionFlags,
}

#[derive(Debug, Clone, Args)]
pub struct AteArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    /// standardization, ipw, aipw or unadjusted.
    #[arg(long, value_parser = kebab::<Estimator>)]
    pub estimator: Option<Estimator>,
    /// File listing the adjustment set (names separated by commas or
    /// whitespace); skips selection.
    #[arg(long)]
    pub selected: Option<PathBuf>,
    /// Bootstrap resamples for a percentile interval (at least 100).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Confidence level of the interval.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Named study configuration.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON study config, or a previous report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for report.json, records.jsonl and summary.txt.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides q for every method.
    #[arg(long)]
    pub q: Option<f64>,
    /// Overrides the MDS repeats of every MDS method.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    pub dry_run: bool,
}

/// Effective settings of a `select` or `ate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub outcome: String,
    pub treatment: String,
    pub family: Family,
    pub q: f64,
    pub criterion: SetCriterion,
    pub method: Method,
    pub mirror: Mirror,
    pub backend: FitMethod,
    pub pvalue_source: PValueSource,
    pub seed: u64,
    pub repeats: usize,
    pub lasso: LassoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ate: Option<AteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteConfig {
    pub estimator: Estimator,
    /// Fixed adjustment set; `None` runs the selection.
    pub selected: Option<Vec<String>>,
    pub bootstrap: Option<usize>,
    pub level: f64,
    pub clip: Clip,
}

/// What a config file may contain: any subset of [`RunConfig`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialRunConfig {
    input: Option<PathBuf>,
    outcome: Option<String>,
    treatment: Option<String>,
    family: Option<FamilyChoice>,
    q: Option<f64>,
    criterion: Option<SetCriterion>,
    method: Option<Method>,
    mirror: Option<Mirror>,
    backend: Option<FitMethod>,
    pvalue_source: Option<PValueSource>,
    seed: Option<u64>,
    repeats: Option<usize>,
    lasso: Option<LassoConfig>,
    ate: Option<PartialAteConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialAteConfig {
    estimator: Option<Estimator>,
    selected: Option<Vec<String>>,
    bootstrap: Option<usize>,
    level: Option<f64>,
    clip: Option<Clip>,
}

/// Reads a JSON config. A previous report (an object with `schema_version`
/// and `config`) contributes its embedded config.
fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("schema_version") {
            if let Some(inner) = obj.remove("config") {
                value = inner;
            }
        }
    }
    serde_json::from_value(value).map_err(bad)
}

fn required<T>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Config(format!("missing required setting `{name}`")))
}

/// Names in a selected-set file, separated by commas or whitespace.
fn read_selected(path: &Path) -> CliResult<Vec<String>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::to_string).collect())
}

fn validate_run(cfg: &RunConfig) -> CliResult<()> {
    check_q(cfg.q)?;
    if cfg.repeats == 0 {
        return Err(CliError::Config("invalid parameter `repeats`: must be at least 1".into()));
    }
    match (cfg.method, cfg.mirror) {
        (Method::Paired, Mirror::Unified) | (Method::Unified, Mirror::Paired) => {
            return Err(CliError::Config(format!(
                "method `{}` conflicts with mirror `{}`",
                report::kebab_name(&cfg.method),
                report::kebab_name(&cfg.mirror)
            )));
        }
        _ => {}
    }
    if let Some(ate) = &cfg.ate {
        ate.clip.validate()?;
        if !(ate.level > 0.0 && ate.level < 1.0) {
            return Err(CliError::Config(format!("invalid parameter `level`: must lie in (0, 1), got {}", ate.level)));
        }
        if let Some(b) = ate.bootstrap.filter(|&b| b < 100) {
            return Err(CliError::Config(format!(
                "invalid parameter `bootstrap`: need at least 100 resamples, got {b}"
            )));
        }
    }
    Ok(())
}

/// Merges config file and flags, loads the data and resolves `family: auto`.
fn prepare(args: &SelectArgs, ate: Option<&AteArgs>) -> CliResult<(RunConfig, Table)> {
    let file: PartialRunConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => PartialRunConfig::default(),
    };
    let f = &args.flags;
    let input = required(f.input.clone().or(file.input), "input")?;
    let outcome = required(f.outcome.clone().or(file.outcome), "outcome")?;
    let treatment = required(f.treatment.clone().or(file.treatment), "treatment")?;
    let method = f.method.or(file.method).unwrap_or(Method::Mds);
    let mirror = f.mirror.or(file.mirror).unwrap_or(match method {
        Method::Paired => Mirror::Paired,
        _ => Mirror::Unified,
    });
    let ate_cfg = match ate {
        None => None,
        Some(a) => {
            let fa = file.ate.unwrap_or_default();
            let selected = match &a.selected {
                Some(p) => Some(read_selected(p)?),
                None => fa.selected,
            };
            Some(AteConfig {
                estimator: a.estimator.or(fa.estimator).unwrap_or(Estimator::Aipw),
                selected,
                bootstrap: a.bootstrap.or(fa.bootstrap),
                level: a.level.or(fa.level).unwrap_or(0.95),
                clip: fa.clip.unwrap_or_default(),
            })
        }
    };
    let family_choice = f.family.or(file.family).unwrap_or(FamilyChoice::Auto);
    let mut cfg = RunConfig {
        input,
        outcome,
        treatment,
        family: Family::Gaussian,
        q: f.q.or(file.q).unwrap_or(0.1),
        criterion: f.criterion.or(file.criterion).unwrap_or(SetCriterion::Or),
        method,
        mirror,
        backend: f.backend.or(file.backend).unwrap_or(FitMethod::Crossfit),
        pvalue_source: f.pvalue_source.or(file.pvalue_source).unwrap_or(PValueSource::JointMle),
        seed: f.seed.or(file.seed).unwrap_or(0),
        repeats: f.repeats.or(file.repeats).unwrap_or(DEFAULT_REPEATS),
        lasso: file.lasso.unwrap_or_default(),
        ate: ate_cfg,
    };
    validate_run(&cfg)?;
    let family = match family_choice {
        FamilyChoice::Auto => None,
        FamilyChoice::Gaussian => Some(Family::Gaussian),
        FamilyChoice::Binomial => Some(Family::Binomial),
    };
    let table = read_csv(&cfg.input, &cfg.outcome, &cfg.treatment, family)?;
    cfg.family = table.data.family();
    Ok((cfg, table))
}

/// A selection with the MDS inclusion rates when they exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub result: SelectionResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<InclusionRates>,
}

/// Runs the configured selection method with `seed`.
pub fn run_selection(data: &Dataset, cfg: &RunConfig, seed: u64) -> crate::Result<Selection> {
    let criterion = Criterion::from(cfg.criterion);
    let strategy = match cfg.mirror {
        Mirror::Unified => Strategy::unified(criterion),
        Mirror::Paired => Strategy::Paired { criterion },
    };
    let request = [(strategy, cfg.q)];
    match cfg.method {
        Method::Ds => {
            let result = ds_select_many(data, &request, cfg.backend, &cfg.lasso, seed)?.remove(0);
            Ok(Selection { result, inclusion: None })
        }
        Method::Mds | Method::Paired | Method::Unified => {
            let (result, rates) =
                mds_select_many(data, &request, cfg.backend, &cfg.lasso, cfg.repeats, seed)?.remove(0);
            Ok(Selection { result, inclusion: Some(rates) })
        }
        Method::Bhq | Method::Byq => {
            let pv = match cfg.pvalue_source {
                PValueSource::JointMle => joint_pvalues(data)?,
                PValueSource::Crossfit => crossfit_pvalues(data, seed, &cfg.lasso)?,
                PValueSource::Marginal => marginal_qvalues(data)?,
            };
            let adjustment = if cfg.method == Method::Bhq { Adjustment::Bh } else { Adjustment::By };
            let result = qvalue_select(&pv, criterion, adjustment, cfg.q)?;
            Ok(Selection { result, inclusion: None })
        }
    }
}

fn write_outputs(dir: &Path, files: &[(&str, String)]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, body) in files {
        fs::write(dir.join(name), body).map_err(io)?;
    }
    Ok(())
}

fn emit(output: Option<&Path>, report: String, summary: String, extra: Vec<(&str, String)>) -> CliResult<()> {
    match output {
        Some(dir) => {
            let mut files = vec![("report.json", report), ("summary.txt", summary)];
            files.extend(extra);
            write_outputs(dir, &files)
        }
        None => {
            print!("{summary}");
            Ok(())
        }
    }
}

fn cmd_select(args: &SelectArgs) -> CliResult<()> {
    let (cfg, table) = prepare(args, None)?;
    let sel = run_selection(&table.data, &cfg, cfg.seed)?;
    let report = report::SelectReport::new(&cfg, &table, sel);
    emit(args.output.as_deref(), report.json(), report.summary(), Vec::new())
}

fn cmd_ate(args: &AteArgs) -> CliResult<()> {
    let (cfg, table) = prepare(&args.select, Some(args))?;
    let ate = cfg.ate.clone().expect("ate settings present");
    let fixed = ate.selected.as_ref().map(|names| table.resolve(names)).transpose()?;
    let estimate_on = |d: &Dataset, sel: &[usize]| -> crate::Result<AteEstimate> {
        Ok(estimate_ate_many(d, sel, &[ate.estimator], ate.clip)?.remove(0))
    };
    let selection = match &fixed {
        Some(_) => None,
        None => Some(run_selection(&table.data, &cfg, cfg.seed)?),
    };
    let chosen: Vec<usize> = match (&fixed, &selection) {
        (Some(f), _) => f.clone(),
        (None, Some(s)) => s.result.selected.clone(),
        (None, None) => unreachable!(),
    };
    let estimate = match ate.bootstrap {
        None => estimate_on(&table.data, &chosen)?,
        Some(n_boot) => {
            // The original sample reuses the selection above; resamples
            // repeat the whole pipeline with their own seeds.
            let pipeline = |d: &Dataset, seed: u64| -> crate::Result<AteEstimate> {
                if std::ptr::eq(d, &table.data) {
                    return estimate_on(d, &chosen);
                }
                match &fixed {
                    Some(f) => estimate_on(d, f),
                    None => estimate_on(d, &run_selection(d, &cfg, seed)?.result.selected),
                }
            };
            bootstrap_ci(&table.data, pipeline, n_boot, ate.level, cfg.seed)?
        }
    };
    let report = report::AteReport::new(&cfg, &table, selection, estimate);
    emit(args.select.output.as_deref(), report.json(), report.summary(), Vec::new())
}

/// Builds the effective study config from a preset or file plus overrides.
pub fn study_config(args: &SimulateArgs) -> CliResult<StudyConfig> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), _) => preset(name)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`; available: {}", PRESETS.join(", "))))?,
        (None, Some(path)) => read_config(path)?,
        (None, None) => return Err(CliError::Config("simulate needs --preset or --config".into())),
    };
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.n_reps = reps;
    }
    for m in &mut cfg.methods {
        match &mut m.method {
            MethodSpec::Mirror { q, repeats, procedure, .. } => {
                if let Some(v) = args.q {
                    *q = v;
                }
                if let Some(r) = args.repeats.filter(|_| *procedure == crate::simulation::SplitProcedure::Mds) {
                    *repeats = Some(r);
                }
            }
            MethodSpec::Qvalue { q, .. } => {
                if let Some(v) = args.q {
                    *q = v;
                }
            }
            MethodSpec::Oracle { .. } | MethodSpec::Empty => {}
        }
    }
    if let Some(q) = args.q {
        check_q(q)?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = study_config(args)?;
    if args.dry_run {
        println!("{}", report::pretty(&cfg));
        return Ok(());
    }
    let study = run_study(&cfg)?;
    let json = report::pretty(&report::SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        config: &study.config,
        aggregates: &study.aggregates,
    });
    let records =
        study.records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect::<String>();
    let summary = report::study_summary(&study);
    emit(args.output.as_deref(), json, summary, vec![("records.jsonl", records)])
}

pub fn run(cli: &Cli) -> CliResult<()> {
    exec::init_threads(cli.threads);
    match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Ate(a) => cmd_ate(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mirrorsel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
