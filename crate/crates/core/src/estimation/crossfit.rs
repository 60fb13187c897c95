use super::glm::fit_glm_columns;
use super::lasso::{fit_lasso, LassoConfig};
use super::{Dataset, FitMethod, ModelFit, Target};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Columns of `cols` (in priority order) that are linearly independent of
/// the intercept, the treatment (if present) and higher-priority columns.
fn independent_columns(data: &Dataset, with_treatment: bool, cols: &[usize]) -> Vec<usize> {
    let n = data.n();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let push = |v: &[f64], basis: &mut Vec<Vec<f64>>| -> bool {
        let norm0: f64 = v.iter().map(|x| x * x).sum();
        if norm0 == 0.0 {
            return false;
        }
        let mut r = v.to_vec();
        for q in basis.iter() {
            let c: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm: f64 = r.iter().map(|x| x * x).sum();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        let s = norm.sqrt();
        r.iter_mut().for_each(|a| *a /= s);
        basis.push(r);
        true
    };
    push(&vec![1.0; n], &mut basis);
    if with_treatment {
        push(data.a(), &mut basis);
    }
    cols.iter().copied().filter(|&j| push(data.column(j), &mut basis)).collect()
}

fn sd(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Split-and-refit: the lasso selects a support on one random half, then
/// the model is refit by MLE on the other half restricted to that support.
/// Unselected covariates get `coef = 0`, `se = None`.
pub fn fit_crossfit(data: &Dataset, target: Target, split_seed: u64, cfg: &LassoConfig) -> Result<ModelFit> {
    let n = data.n();
    if n < 20 {
        return Err(Error::Dimension(format!("cross-fitting needs n >= 20, got {n}")));
    }
    let perm = rng::permutation(n, split_seed, Stream::Split);
    let (screen_idx, refit_idx) = perm.split_at(n / 2);
    let screen = data.subset_rows(screen_idx);
    let refit = data.subset_rows(refit_idx);

    let lasso_cfg = LassoConfig { cv_seed: rng::mix(split_seed, 0xC5), ..cfg.clone() };
    let screened = fit_lasso(&screen, target, cfg.lambda, &lasso_cfg)?;

    // Support ordered by standardized lasso magnitude, largest first.
    let mut support: Vec<(usize, f64)> = screened
        .coef
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, (c * sd(screen.column(j))).abs()))
        .collect();
    support.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let ordered: Vec<usize> = support.iter().map(|s| s.0).collect();

    let with_treatment = target == Target::Outcome;
    let mut flagged = false;
    let mut cols = independent_columns(&refit, with_treatment, &ordered);
    flagged |= cols.len() < ordered.len();
    // Keep at least two residual degrees of freedom in the refit.
    let fixed = 1 + usize::from(with_treatment);
    let room = refit.n().saturating_sub(fixed + 2);
    if cols.len() > room {
        cols.truncate(room);
        flagged = true;
    }

    let mut fit = loop {
        let mut sorted = cols.clone();
        sorted.sort_unstable();
        match fit_glm_columns(&refit, target, &sorted) {
            Ok(fit) => break fit,
            Err(Error::Singular { .. }) if !cols.is_empty() => {
                cols.pop();
                flagged = true;
            }
            Err(e) => return Err(e),
        }
    };
    fit.method = FitMethod::Crossfit;
    fit.converged &= !flagged;
    Ok(fit)
}
