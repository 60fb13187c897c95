//! JSON reports and plain-text summaries.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{RunConfig, Selection, Table};
use crate::causal::AteEstimate;
use crate::simulation::{MethodSummary, StudyConfig, StudyReport, SCHEMA_VERSION};

pub fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

/// The serde name of a unit enum variant.
pub fn kebab_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

/// Two aligned columns.
fn key_values(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

/// Left-aligned first column, right-aligned others.
fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (k, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if k == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s + "\n"
    };
    std::iter::once(line(header)).chain(rows.iter().map(|r| line(r))).collect()
}

fn method_line(cfg: &RunConfig) -> String {
    let criterion = kebab_name(&cfg.criterion);
    match cfg.method {
        super::Method::Bhq | super::Method::Byq => {
            format!("{} ({} p-values, criterion {criterion})", kebab_name(&cfg.method), kebab_name(&cfg.pvalue_source))
        }
        _ => format!(
            "{} ({} mirror, criterion {criterion}, backend {})",
            kebab_name(&cfg.method),
            kebab_name(&cfg.mirror),
            kebab_name(&cfg.backend)
        ),
    }
}

fn list(names: &[String]) -> String {
    if names.is_empty() {
        "(none)".into()
    } else {
        names.join(" ")
    }
}

fn threshold(sel: &Selection) -> String {
    sel.result.threshold.map_or("none qualified".into(), |t| t.to_string())
}

#[derive(Debug, Serialize)]
pub struct SelectReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    n: usize,
    covariates: &'a [String],
    selected: Vec<String>,
    selection: Selection,
}

impl<'a> SelectReport<'a> {
    pub fn new(config: &'a RunConfig, table: &'a Table, selection: Selection) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "select",
            config,
            n: table.data.n(),
            covariates: &table.covariates,
            selected: table.names(&selection.result.selected),
            selection,
        }
    }

    pub fn json(&self) -> String {
        pretty(self)
    }

    pub fn summary(&self) -> String {
        key_values(&[
            ("input", self.config.input.display().to_string()),
            ("rows", self.n.to_string()),
            ("covariates", self.covariates.len().to_string()),
            ("family", kebab_name(&self.config.family)),
            ("method", method_line(self.config)),
            ("q", self.config.q.to_string()),
            ("seed", self.config.seed.to_string()),
            ("threshold", threshold(&self.selection)),
            ("fdp bound", self.selection.result.fdp_bound.to_string()),
            ("selected", self.selected.len().to_string()),
            ("variables", list(&self.selected)),
        ])
    }
}

#[derive(Debug, Serialize)]
pub struct AteReport<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    n: usize,
    /// Adjustment set by name.
    selected: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<Selection>,
    estimate: AteEstimate,
}

impl<'a> AteReport<'a> {
    pub fn new(config: &'a RunConfig, table: &Table, selection: Option<Selection>, estimate: AteEstimate) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "ate",
            config,
            n: table.data.n(),
            selected: table.names(&estimate.selected),
            selection,
            estimate,
        }
    }

    pub fn json(&self) -> String {
        pretty(self)
    }

    pub fn summary(&self) -> String {
        let e = &self.estimate;
        let mut rows = vec![
            ("input", self.config.input.display().to_string()),
            ("rows", self.n.to_string()),
            ("estimator", kebab_name(&e.estimator)),
            ("estimate", e.estimate.to_string()),
        ];
        if let (Some(lo), Some(hi), Some(b)) = (e.ci_lower, e.ci_upper, e.n_boot) {
            let level = self.config.ate.as_ref().map_or(0.95, |a| a.level);
            rows.push(("interval", format!("[{lo}, {hi}] ({}% percentile, {b} resamples)", level * 100.0)));
        }
        match &self.selection {
            Some(s) => {
                rows.push(("method", method_line(self.config)));
                rows.push(("q", self.config.q.to_string()));
                rows.push(("threshold", threshold(s)));
            }
            None => rows.push(("method", "fixed adjustment set".into())),
        }
        rows.push(("selected", self.selected.len().to_string()));
        rows.push(("variables", list(&self.selected)));
        key_values(&rows)
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: &'a StudyConfig,
    pub aggregates: &'a BTreeMap<String, MethodSummary>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3}"))
}

/// One row per method: failures, mean selection size, mean metrics and mean
/// relative bias per estimator.
pub fn study_summary(study: &StudyReport) -> String {
    let cfg = &study.config;
    let mut header: Vec<String> =
        ["method", "failures", "selected", "fdp_or", "fdp_and", "power_or", "power_and", "power_only_a"]
            .map(String::from)
            .to_vec();
    header.extend(cfg.estimators.iter().map(|e| format!("relbias_{}", kebab_name(e))));
    let rows: Vec<Vec<String>> = cfg
        .methods
        .iter()
        .map(|m| {
            let s = &study.aggregates[&m.label];
            let mut row = vec![m.label.clone(), s.failures.to_string(), cell(s.n_selected.map(|v| v.mean))];
            for f in ["fdp_or", "fdp_and", "power_or", "power_and", "power_only_a"] {
                row.push(cell(s.metrics.get(f).map(|v| v.mean)));
            }
            row.extend(cfg.estimators.iter().map(|e| cell(s.relative_bias.get(e).map(|v| v.mean))));
            row
        })
        .collect();
    let title = format!("{} replications, base seed {}\n", cfg.n_reps, cfg.base_seed);
    title + &grid(&header, &rows)
}
