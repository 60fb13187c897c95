//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use mirrorsel::estimation::LassoPathPoint;
use mirrorsel::simulation::{Metrics, Truth};
use mirrorsel::{Dataset, Family, Target};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian covariates, fair-coin treatment and `y = 0.5 a + x'beta + e`,
/// with `y` replaced by a Bernoulli draw for the binomial family.
pub fn linear_data(n: usize, p: usize, beta: &[f64], family: Family, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let a: Vec<f64> = (0..n).map(|_| f64::from(r.random::<f64>() < 0.5)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 0.5 * a[i] + (0..beta.len().min(p)).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
            match family {
                Family::Gaussian => eta + r.sample::<f64, _>(StandardNormal),
                Family::Binomial => f64::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp())),
            }
        })
        .collect();
    Dataset::new(y, a, x, family).unwrap()
}

/// Design matrix `[1, a, X]` (outcome) or `[1, X]` (treatment).
pub fn design(data: &Dataset, target: Target) -> DMatrix<f64> {
    let n = data.n();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    if target == Target::Outcome {
        cols.push(data.a().to_vec());
    }
    cols.extend((0..data.p()).map(|j| data.column(j).to_vec()));
    DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i])
}

/// OLS through the normal equations: `(Z'Z)^-1 Z'y`.
pub fn normal_equations(data: &Dataset, target: Target) -> Vec<f64> {
    let z = design(data, target);
    let (y, _) = data.response(target);
    let zty = z.transpose() * DVector::from_column_slice(y);
    let ztz = z.transpose() * &z;
    ztz.lu().solve(&zty).expect("full-rank design").as_slice().to_vec()
}

/// `Z'(y - mu)` at coefficients `theta` laid out as in [`design`].
pub fn logistic_score(data: &Dataset, target: Target, theta: &[f64]) -> Vec<f64> {
    let z = design(data, target);
    let (y, _) = data.response(target);
    let eta = &z * DVector::from_column_slice(theta);
    let resid = DVector::from_fn(data.n(), |i, _| y[i] - 1.0 / (1.0 + (-eta[i]).exp()));
    (z.transpose() * resid).as_slice().to_vec()
}

/// Largest KKT violation of a lasso solution. The objective is
/// `(1/n) negloglik + lambda sum_j |b_j|` over covariates standardized to
/// mean 0 and variance 1 (divisor n); intercept and treatment are free.
pub fn kkt_violation(data: &Dataset, target: Target, point: &LassoPathPoint, lambda: f64) -> f64 {
    let n = data.n();
    let nf = n as f64;
    let (y, family) = data.response(target);
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            point.intercept
                + point.treatment_coef.unwrap_or(0.0) * data.a()[i]
                + (0..data.p()).map(|j| point.coef[j] * data.column(j)[i]).sum::<f64>()
        })
        .collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| match family {
            Family::Gaussian => y[i] - eta[i],
            Family::Binomial => y[i] - 1.0 / (1.0 + (-eta[i]).exp()),
        })
        .collect();
    let std_grad = |col: &[f64]| -> Option<f64> {
        let mean = col.iter().sum::<f64>() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        (sd > 1e-12 * (1.0 + mean.abs()))
            .then(|| col.iter().zip(&resid).map(|(v, r)| (v - mean) / sd * r).sum::<f64>() / nf)
    };
    let mut worst = (resid.iter().sum::<f64>() / nf).abs();
    if target == Target::Outcome {
        if let Some(g) = std_grad(data.a()) {
            worst = worst.max(g.abs());
        }
    }
    for j in 0..data.p() {
        let Some(g) = std_grad(data.column(j)) else {
            continue;
        };
        let b = point.coef[j];
        let v = if b != 0.0 { (g - lambda * b.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

fn clean(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn candidates(vectors: &[&[f64]]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in vectors {
        for &x in v.iter() {
            let t = clean(x).abs();
            if t > 0.0 && !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn frac(num: usize, den: usize) -> f64 {
    num as f64 / den.max(1) as f64
}

/// Brute-force single-vector threshold rule.
pub fn oracle_threshold(m: &[f64], q: f64) -> Vec<usize> {
    for t in candidates(&[m]) {
        let neg = m.iter().filter(|&&v| clean(v) < -t).count();
        let pos = m.iter().filter(|&&v| clean(v) > t).count();
        if frac(neg, pos) <= q {
            return (0..m.len()).filter(|&j| clean(m[j]) > t).collect();
        }
    }
    Vec::new()
}

pub fn oracle_paired_union(my: &[f64], ma: &[f64], q: f64) -> Vec<usize> {
    let p = my.len();
    for t in candidates(&[my, ma]) {
        let neg = (0..p).filter(|&j| clean(my[j]) < -t || clean(ma[j]) < -t).count();
        let pos = (0..p).filter(|&j| clean(my[j]) > t || clean(ma[j]) > t).count();
        if frac(neg, pos) <= q {
            return (0..p).filter(|&j| clean(my[j]) > t || clean(ma[j]) > t).collect();
        }
    }
    Vec::new()
}

pub fn oracle_paired_minimal(my: &[f64], ma: &[f64], q: f64) -> Vec<usize> {
    let p = my.len();
    for t in candidates(&[my, ma]) {
        let count = |sy: f64, sa: f64| (0..p).filter(|&j| sy * clean(my[j]) > t && sa * clean(ma[j]) > t).count();
        let num = (count(1.0, -1.0) + count(-1.0, 1.0)) as i64 - count(-1.0, -1.0) as i64;
        if frac(num.max(0) as usize, count(1.0, 1.0)) <= q {
            return (0..p).filter(|&j| clean(my[j]) > t && clean(ma[j]) > t).collect();
        }
    }
    Vec::new()
}

/// Step-up adjustment by definition: the smallest `c m p_(l) / l` over the
/// sorted positions `l` at or after each value, with ties sharing the
/// largest position.
pub fn oracle_step_up(p: &[f64], c: f64) -> Vec<f64> {
    let m = p.len();
    p.iter()
        .map(|&pi| {
            p.iter()
                .filter(|&&v| v >= pi)
                .map(|&v| {
                    let rank = p.iter().filter(|&&u| u <= v).count();
                    c * m as f64 / rank as f64 * v
                })
                .fold(f64::INFINITY, f64::min)
                .min(1.0)
        })
        .collect()
}

pub fn oracle_bh(p: &[f64]) -> Vec<f64> {
    oracle_step_up(p, 1.0)
}

pub fn oracle_by(p: &[f64]) -> Vec<f64> {
    let c: f64 = (1..=p.len()).map(|i| 1.0 / i as f64).sum();
    oracle_step_up(p, c)
}

pub fn oracle_score(selected: &[usize], truth: &Truth) -> Metrics {
    let sel: HashSet<usize> = selected.iter().copied().collect();
    let sy: HashSet<usize> = truth.s_y.iter().copied().collect();
    let sa: HashSet<usize> = truth.s_a.iter().copied().collect();
    let or: HashSet<usize> = sy.union(&sa).copied().collect();
    let and: HashSet<usize> = sy.intersection(&sa).copied().collect();
    let only_a: HashSet<usize> = sa.difference(&sy).copied().collect();
    let fdp = |t: &HashSet<usize>| {
        if sel.is_empty() {
            0.0
        } else {
            sel.difference(t).count() as f64 / sel.len() as f64
        }
    };
    let power = |t: &HashSet<usize>| {
        if t.is_empty() {
            1.0
        } else {
            sel.intersection(t).count() as f64 / t.len() as f64
        }
    };
    Metrics {
        n_selected: sel.len(),
        fdp_or: fdp(&or),
        fdp_and: fdp(&and),
        power_or: power(&or),
        power_and: power(&and),
        power_only_a: power(&only_a),
    }
}
