//! Mirror statistics and FDR-controlled selection.
//!
//! A mirror is positive for a likely signal and sign-symmetric for a null
//! variable, so the negative tail estimates the number of false positives
//! in the positive tail. Three families are provided:
//!
//! * the original single-model mirror,
//! * paired mirrors (one per model, thresholded jointly),
//! * unified mirrors built from the 2-vector of treatment and outcome
//!   coefficients.
//!
//! Each supports the union-set (OR) and minimal-set (AND) criteria, with
//! single data splitting (DS) or multiple data splitting (MDS).

use serde::{Deserialize, Serialize};

mod splitting;
mod statistics;
mod threshold;

pub use splitting::{
    ds_select, ds_select_many, mds_select, mds_select_many, select_from_pair, split_pair, SelectionConfig, Strategy,
    DEFAULT_REPEATS,
};
pub use statistics::{
    original_mirror, paired_mirrors, sign, unified_and_mirror, unified_or_mirror, AxisTerm, Concordance,
    FunctionalForm, Intensity, MirrorSet,
};
pub use threshold::{
    inclusion_rates, paired_minimal_select, paired_union_select, select_by_inclusion, select_threshold,
    select_threshold_set,
};

/// Which set of confounders a selection targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Union set: variables in either model.
    Or,
    /// Minimal set: variables in both models.
    And,
    /// One model only (original mirror).
    SingleModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorKind {
    Original,
    Paired,
    Unified,
}

/// How the selected set was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    /// Direct thresholding of given mirrors.
    Threshold,
    Ds,
    Mds,
    /// Adjusted p-values compared against q.
    QValue,
}

/// Outcome of a selection procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Zero-based, ascending.
    pub selected: Vec<usize>,
    /// Mirror threshold, inclusion-rate cutoff or q-value cutoff. `None`
    /// means no threshold qualified (infinite).
    pub threshold: Option<f64>,
    pub fdp_bound: f64,
    pub q: f64,
    pub criterion: Criterion,
    pub procedure: Procedure,
    pub mirror: Option<MirrorKind>,
}

impl SelectionResult {
    pub fn contains(&self, j: usize) -> bool {
        self.selected.binary_search(&j).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRates {
    pub rates: Vec<f64>,
    pub repeats: usize,
}
