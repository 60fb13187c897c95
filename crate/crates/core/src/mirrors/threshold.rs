//! FDP-bound thresholding.
//!
//! Every rule scans the grid of distinct nonzero `|M_j|` in increasing
//! order and keeps the first `t` whose estimated FDP is at most `q`. Counts
//! use strict inequalities, so a mirror equal to `t` is neither selected nor
//! counted. Each count is `#{v_j > t}` for some derived vector `v`, which a
//! sorted copy answers in `O(log p)`.

use super::{Criterion, InclusionRates, MirrorKind, MirrorSet, Procedure, SelectionResult};
use crate::error::{check_q, Error, Result};

fn clean(m: &[f64]) -> Vec<f64> {
    m.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect()
}

fn grid<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut g: Vec<f64> = vectors.into_iter().flatten().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Answers `#{v_j > t}`.
struct Exceedances(Vec<f64>);

impl Exceedances {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    fn above(&self, t: f64) -> usize {
        self.0.len() - self.0.partition_point(|&v| v <= t)
    }
}

/// First grid point whose ratio is at most `q`, with that ratio.
fn scan(grid: &[f64], q: f64, ratio: impl Fn(f64) -> f64) -> (Option<f64>, f64) {
    for &t in grid {
        let r = ratio(t);
        if r <= q {
            return (Some(t), r);
        }
    }
    (None, 0.0)
}

fn result(
    selected: Vec<usize>,
    threshold: Option<f64>,
    fdp_bound: f64,
    q: f64,
    criterion: Criterion,
    mirror: MirrorKind,
) -> SelectionResult {
    SelectionResult {
        selected,
        threshold,
        fdp_bound,
        q,
        criterion,
        procedure: Procedure::Threshold,
        mirror: Some(mirror),
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    num as f64 / den.max(1) as f64
}

/// Single-vector rule: `#{M < -t} / (#{M > t} v 1) <= q`, select `{M > t}`.
pub fn select_threshold(mirrors: &[f64], q: f64) -> Result<SelectionResult> {
    single(mirrors, q, Criterion::SingleModel, MirrorKind::Original)
}

fn single(mirrors: &[f64], q: f64, criterion: Criterion, kind: MirrorKind) -> Result<SelectionResult> {
    check_q(q)?;
    let m = clean(mirrors);
    let pos = Exceedances::new(m.iter().copied());
    let neg = Exceedances::new(m.iter().map(|v| -v));
    let (t, bound) = scan(&grid([m.as_slice()]), q, |t| ratio(neg.above(t), pos.above(t)));
    let selected = match t {
        Some(t) => (0..m.len()).filter(|&j| m[j] > t).collect(),
        None => Vec::new(),
    };
    Ok(result(selected, t, bound, q, criterion, kind))
}

fn paired_inputs(m_y: &[f64], m_a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if m_y.len() != m_a.len() {
        return Err(Error::Dimension(format!("paired mirrors differ in length: {} vs {}", m_y.len(), m_a.len())));
    }
    Ok((clean(m_y), clean(m_a)))
}

/// Union rule: `#{M_Y < -t or M_A < -t} / (#{M_Y > t or M_A > t} v 1) <= q`.
pub fn paired_union_select(m_y: &[f64], m_a: &[f64], q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let (y, a) = paired_inputs(m_y, m_a)?;
    let pairs = || y.iter().zip(&a);
    let pos = Exceedances::new(pairs().map(|(u, v)| u.max(*v)));
    let neg = Exceedances::new(pairs().map(|(u, v)| -(u.min(*v))));
    let (t, bound) = scan(&grid([y.as_slice(), a.as_slice()]), q, |t| ratio(neg.above(t), pos.above(t)));
    let selected = match t {
        Some(t) => (0..y.len()).filter(|&j| y[j] > t || a[j] > t).collect(),
        None => Vec::new(),
    };
    Ok(result(selected, t, bound, q, Criterion::Or, MirrorKind::Paired))
}

/// Minimal rule:
/// `max(0, |S1| + |S2| - |S3|) / (#{M_Y > t and M_A > t} v 1) <= q` with
/// `S1 = {M_Y > t, M_A < -t}`, `S2 = {M_Y < -t, M_A > t}`,
/// `S3 = {M_Y < -t, M_A < -t}`.
pub fn paired_minimal_select(m_y: &[f64], m_a: &[f64], q: f64) -> Result<SelectionResult> {
    check_q(q)?;
    let (y, a) = paired_inputs(m_y, m_a)?;
    let quadrant = |sy: f64, sa: f64| Exceedances::new(y.iter().zip(&a).map(|(u, v)| (sy * u).min(sa * v)));
    let both = quadrant(1.0, 1.0);
    let s1 = quadrant(1.0, -1.0);
    let s2 = quadrant(-1.0, 1.0);
    let s3 = quadrant(-1.0, -1.0);
    let (t, bound) = scan(&grid([y.as_slice(), a.as_slice()]), q, |t| {
        let num = (s1.above(t) + s2.above(t)).saturating_sub(s3.above(t));
        ratio(num, both.above(t))
    });
    let selected = match t {
        Some(t) => (0..y.len()).filter(|&j| y[j] > t && a[j] > t).collect(),
        None => Vec::new(),
    };
    Ok(result(selected, t, bound, q, Criterion::And, MirrorKind::Paired))
}

/// Dispatches on the kind and criterion of a mirror set.
pub fn select_threshold_set(set: &MirrorSet, q: f64) -> Result<SelectionResult> {
    match set {
        MirrorSet::Single { m, criterion: Criterion::SingleModel } => select_threshold(m, q),
        MirrorSet::Single { m, criterion } => single(m, q, *criterion, MirrorKind::Unified),
        MirrorSet::Paired { m_y, m_a, criterion } => match criterion {
            Criterion::Or => paired_union_select(m_y, m_a, q),
            Criterion::And => paired_minimal_select(m_y, m_a, q),
            Criterion::SingleModel => Err(Error::param("criterion", "paired mirrors need OR or AND")),
        },
    }
}

/// `I_j = M^-1 sum_m 1{j in S_m} / (|S_m| v 1)`.
pub fn inclusion_rates(selections: &[Vec<usize>], p: usize) -> Result<InclusionRates> {
    if selections.is_empty() {
        return Err(Error::param("repeats", "need at least one selection"));
    }
    let mut rates = vec![0.0; p];
    for s in selections {
        let w = 1.0 / s.len().max(1) as f64;
        for &j in s {
            if j >= p {
                return Err(Error::Dimension(format!("selected index {j} out of range for p = {p}")));
            }
            rates[j] += w;
        }
    }
    let m = selections.len() as f64;
    rates.iter_mut().for_each(|r| *r /= m);
    Ok(InclusionRates { rates, repeats: selections.len() })
}

/// Sorts rates ascending, finds the largest `j'` with
/// `sum_{j <= j'} I_(j) <= q` and keeps `{j : I_j > I_(j')}`. With no such
/// `j'` the cutoff is 0.
pub fn select_by_inclusion(rates: &[f64], q: f64, criterion: Criterion) -> Result<SelectionResult> {
    check_q(q)?;
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidData("inclusion rates must lie in [0, 1]".into()));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cum = 0.0;
    let mut cutoff = 0.0;
    let mut bound = 0.0;
    for &r in &sorted {
        cum += r;
        if cum > q {
            break;
        }
        cutoff = r;
        bound = cum;
    }
    let selected = (0..rates.len()).filter(|&j| rates[j] > cutoff).collect();
    Ok(SelectionResult {
        selected,
        threshold: Some(cutoff),
        fdp_bound: bound,
        q,
        criterion,
        procedure: Procedure::Mds,
        mirror: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_examples() {
        let r = select_threshold(&[3.0, 2.0, 1.0, -1.0], 0.5).unwrap();
        assert_eq!(r.threshold, Some(1.0));
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.fdp_bound, 0.0);

        assert!(select_threshold(&[-1.0, -2.0], 0.3).unwrap().selected.is_empty());

        let r = select_threshold(&[5.0, 4.0, 3.0, -5.0, -4.0, -3.0], 0.3).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.threshold, Some(5.0));
    }

    #[test]
    fn empty_grid_gives_infinite_threshold() {
        let r = select_threshold(&[0.0, 0.0, f64::NAN], 0.1).unwrap();
        assert_eq!(r.threshold, None);
        assert!(r.selected.is_empty());
    }

    #[test]
    fn q_range_checked() {
        for q in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(select_threshold(&[1.0], q).is_err());
            assert!(paired_union_select(&[1.0], &[1.0], q).is_err());
            assert!(paired_minimal_select(&[1.0], &[1.0], q).is_err());
            assert!(select_by_inclusion(&[0.1], q, Criterion::Or).is_err());
        }
    }

    #[test]
    fn union_examples() {
        let r = paired_union_select(&[3.0, 0.1], &[0.1, 3.0], 0.5).unwrap();
        assert_eq!(r.threshold, Some(0.1));
        assert_eq!(r.selected, vec![0, 1]);
        assert!(paired_union_select(&[-1.0, -2.0], &[-3.0, -1.0], 0.5).unwrap().selected.is_empty());
        let r = paired_union_select(&[2.0], &[-2.0], 0.2).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.threshold, Some(2.0));
        assert!(paired_union_select(&[1.0], &[1.0, 2.0], 0.2).is_err());
    }

    #[test]
    fn minimal_examples() {
        let r = paired_minimal_select(&[4.0, 4.0, -4.0], &[4.0, -4.0, -4.0], 0.5).unwrap();
        assert!(r.selected.is_empty());
        // Only grid value is 5 and strict counts at t = 5 are all empty.
        assert!(paired_minimal_select(&[5.0; 3], &[5.0; 3], 0.1).unwrap().selected.is_empty());
        assert!(paired_minimal_select(&[5.0, -5.0], &[5.0, -5.0], 0.1).unwrap().selected.is_empty());
        // A smaller grid point exposes the concordant variables.
        let r = paired_minimal_select(&[5.0, 5.0, 5.0, 1.0], &[5.0, 5.0, 5.0, 1.0], 0.1).unwrap();
        assert_eq!(r.threshold, Some(1.0));
        assert_eq!(r.selected, vec![0, 1, 2]);
        let r = paired_minimal_select(&[5.0, -5.0, 1.0], &[5.0, -5.0, 1.0], 0.1).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.fdp_bound, 0.0);
    }

    #[test]
    fn inclusion_examples() {
        let r = select_by_inclusion(&[0.05, 0.1, 0.3, 0.4], 0.1, Criterion::Or).unwrap();
        assert_eq!(r.selected, vec![1, 2, 3]);
        assert_eq!(r.threshold, Some(0.05));
        assert!((r.fdp_bound - 0.05).abs() < 1e-15);
        assert!(select_by_inclusion(&[0.0; 4], 0.1, Criterion::Or).unwrap().selected.is_empty());
        // Ties at the cutoff are excluded.
        let r = select_by_inclusion(&[0.05, 0.05, 0.9], 0.1, Criterion::Or).unwrap();
        assert_eq!(r.selected, vec![2]);
    }

    #[test]
    fn rates_from_selections() {
        let r = inclusion_rates(&[vec![0, 1], vec![], vec![1]], 3).unwrap();
        assert_eq!(r.repeats, 3);
        let want = [0.5 / 3.0, 1.5 / 3.0, 0.0];
        for (a, b) in r.rates.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let single = inclusion_rates(&[vec![2, 4]], 5).unwrap();
        assert!(single.rates.iter().all(|&v| v == 0.0 || v == 0.5));
        assert!(inclusion_rates(&[vec![5]], 5).is_err());
        assert!(inclusion_rates(&[], 5).is_err());
    }
}
