//! CSV input.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;

use super::CliError;
use crate::{Dataset, Family};

/// A dataset read from disk together with its covariate names.
#[derive(Debug, Clone)]
pub struct Table {
    pub data: Dataset,
    pub covariates: Vec<String>,
}

impl Table {
    /// Column indices of `names`, rejecting anything that is not a covariate.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>, CliError> {
        let mut idx = names
            .iter()
            .map(|name| {
                self.covariates
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| CliError::Data(format!("selected column `{name}` is not a covariate in the input")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }

    pub fn names(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&j| self.covariates[j].clone()).collect()
    }
}

fn is_binary(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Outcome family when the user did not fix one: binomial for 0/1 outcomes.
pub fn infer_family(y: &[f64]) -> Family {
    if is_binary(y) {
        Family::Binomial
    } else {
        Family::Gaussian
    }
}

/// Reads a headered numeric CSV. Every column other than `outcome` and
/// `treatment` is a covariate. Rows are reported 1-based, counting data
/// rows only.
pub fn read_csv(path: &Path, outcome: &str, treatment: &str, family: Option<Family>) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut seen = HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(CliError::Data(format!("duplicate column `{dup}`")));
    }
    let find = |name: &str, role: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{role} column `{name}` not found in header")))
    };
    let (iy, ia) = (find(outcome, "outcome")?, find(treatment, "treatment")?);
    if iy == ia {
        return Err(CliError::Data(format!("column `{outcome}` cannot be both outcome and treatment")));
    }
    let cov_cols: Vec<usize> = (0..header.len()).filter(|&c| c != iy && c != ia).collect();
    if cov_cols.is_empty() {
        return Err(CliError::Data("no covariate columns".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        for (c, field) in record.iter().enumerate() {
            let name = &header[c];
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                return Err(CliError::Data(format!("missing value at row {row}, column `{name}`")));
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Data(format!("row {row}, column `{name}`: `{field}` is not a finite number"))
            })?;
            columns[c].push(v);
        }
    }
    let n = columns[0].len();
    if let Some(i) = columns[ia].iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(CliError::Data(format!(
            "treatment column `{treatment}` must be 0/1; row {} has {}",
            i + 1,
            columns[ia][i]
        )));
    }
    let family = family.unwrap_or_else(|| infer_family(&columns[iy]));
    if family == Family::Binomial {
        if let Some(i) = columns[iy].iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(CliError::Data(format!(
                "binomial outcome column `{outcome}` must be 0/1; row {} has {}",
                i + 1,
                columns[iy][i]
            )));
        }
    }
    let x = DMatrix::from_fn(n, cov_cols.len(), |i, j| columns[cov_cols[j]][i]);
    let y = std::mem::take(&mut columns[iy]);
    let a = std::mem::take(&mut columns[ia]);
    let data = Dataset::new(y, a, x, family)?;
    Ok(Table { data, covariates: cov_cols.iter().map(|&c| header[c].clone()).collect() })
}
