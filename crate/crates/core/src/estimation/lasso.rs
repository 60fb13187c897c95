//! L1-penalized GLMs by pathwise coordinate descent.
//!
//! Objective on the internally standardized design:
//! `(1/n) * negloglik(b0, beta) + lambda * sum_j pf_j |beta_j|`, where the
//! Gaussian negative log-likelihood is `0.5 * RSS`. The intercept and (for
//! the outcome model) the treatment column are unpenalized. Logistic fits
//! use proximal Newton outer steps around a weighted least-squares inner
//! solve. Sequential strong rules restrict each solve to a candidate set,
//! and a KKT pass over the remaining coordinates restores exactness.

use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{expit, Dataset, Family, FitMethod, ModelFit, Target};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoConfig {
    /// Fixed penalty; `None` selects it by cross-validation.
    pub lambda: Option<f64>,
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub cv_seed: u64,
    /// Coordinate-descent tolerance, in gradient units.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { lambda: None, folds: 10, n_lambda: 100, lambda_min_ratio: 1e-3, cv_seed: 0, tol: 1e-10 }
    }
}

/// One solution on a lasso path, on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathPoint {
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub treatment_coef: Option<f64>,
}

const MAX_OUTER: usize = 100;
const MAX_SWEEPS: usize = 100_000;
const MIN_WEIGHT: f64 = 1e-5;
/// Minimum sweeps between active-set solves, and the predicted remaining
/// sweep count that justifies one.
const POLISH_MIN_SWEEPS: usize = 10;

/// Standardized working copy of one model's design.
struct Problem {
    n: usize,
    /// Column-major `n x m`; column 0 is the treatment for outcome models.
    x: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    penalized: Vec<bool>,
    usable: Vec<bool>,
    /// Covariate index for each column, `None` for the treatment column.
    source: Vec<Option<usize>>,
    y: Vec<f64>,
    family: Family,
    p: usize,
    /// Lazily computed columns of `X^T X / n`, used by Gaussian fits.
    gram: Vec<OnceLock<Vec<f64>>>,
}

impl Problem {
    fn new(data: &Dataset, target: Target) -> Self {
        let n = data.n();
        let p = data.p();
        let (y, family) = data.response(target);
        let mut cols: Vec<(&[f64], Option<usize>, bool)> = Vec::with_capacity(p + 1);
        if target == Target::Outcome {
            cols.push((data.a(), None, false));
        }
        cols.extend((0..p).map(|j| (data.column(j), Some(j), true)));

        let m = cols.len();
        let mut x = Vec::with_capacity(n * m);
        let mut mean = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        let mut usable = Vec::with_capacity(m);
        for (col, _, _) in &cols {
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            let ok = sd > 1e-12 * (1.0 + mu.abs());
            let s = if ok { sd } else { 1.0 };
            x.extend(col.iter().map(|v| if ok { (v - mu) / s } else { 0.0 }));
            mean.push(mu);
            scale.push(s);
            usable.push(ok);
        }
        Self {
            n,
            x,
            mean,
            scale,
            penalized: cols.iter().map(|c| c.2).collect(),
            usable,
            source: cols.iter().map(|c| c.1).collect(),
            y: y.to_vec(),
            family,
            p,
            gram: (0..m).map(|_| OnceLock::new()).collect(),
        }
    }

    fn gram_col(&self, j: usize) -> &[f64] {
        self.gram[j].get_or_init(|| (0..self.m()).map(|k| dot(self.col(k), self.col(j)) / self.n as f64).collect())
    }

    fn m(&self) -> usize {
        self.mean.len()
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Standardizes one raw row value for column `j`.
    fn transform(&self, j: usize, raw: f64) -> f64 {
        if self.usable[j] {
            (raw - self.mean[j]) / self.scale[j]
        } else {
            0.0
        }
    }
}

#[derive(Clone)]
struct State {
    beta: Vec<f64>,
    b0: f64,
    eta: Vec<f64>,
}

impl State {
    fn zero(prob: &Problem) -> Self {
        let b0 = match prob.family {
            Family::Gaussian => prob.y.iter().sum::<f64>() / prob.n as f64,
            Family::Binomial => {
                let ybar = (prob.y.iter().sum::<f64>() / prob.n as f64).clamp(1e-6, 1.0 - 1e-6);
                (ybar / (1.0 - ybar)).ln()
            }
        };
        Self { beta: vec![0.0; prob.m()], b0, eta: vec![b0; prob.n] }
    }

    fn recompute_eta(&mut self, prob: &Problem) {
        self.eta.iter_mut().for_each(|e| *e = self.b0);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (e, xv) in self.eta.iter_mut().zip(prob.col(j)) {
                    *e += b * xv;
                }
            }
        }
    }
}

fn soft(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `sum_i a_i b_i c_i`, accumulated like [`dot`].
fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb, cc) = (a.chunks_exact(4), b.chunks_exact(4), c.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).zip(cc.remainder()).map(|((x, y), z)| x * y * z).sum();
    for ((x, y), z) in ca.zip(cb).zip(cc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k] * z[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Weighted least-squares coordinate descent on `set`. `r` is the working
/// residual and is kept in sync with `beta`/`b0`. Unit weights when `w` is
/// `None`.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    prob: &Problem,
    w: Option<&[f64]>,
    v: &[f64],
    r: &mut [f64],
    beta: &mut [f64],
    b0: &mut f64,
    set: &[usize],
    lambda: f64,
    tol: f64,
) {
    let n = prob.n as f64;
    let w_sum = w.map_or(n, |w| w.iter().sum());
    let sweep = |idx: &mut dyn Iterator<Item = usize>, beta: &mut [f64], r: &mut [f64], b0: &mut f64| {
        let mut max_delta = 0.0f64;
        for j in idx {
            let xj = prob.col(j);
            let g = match w {
                None => dot(xj, r) / n,
                Some(w) => dot3(xj, w, r) / n,
            };
            let pen = if prob.penalized[j] { lambda } else { 0.0 };
            let new = soft(v[j] * beta[j] + g, pen) / v[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                r.iter_mut().zip(xj).for_each(|(r, x)| *r -= delta * x);
                beta[j] = new;
                max_delta = max_delta.max(v[j] * delta.abs());
            }
        }
        let shift = match w {
            None => r.iter().sum::<f64>() / n,
            Some(w) => dot(w, r) / w_sum,
        };
        if shift != 0.0 {
            r.iter_mut().for_each(|r| *r -= shift);
            *b0 += shift;
            max_delta = max_delta.max(shift.abs() * w_sum / n);
        }
        max_delta
    };

    let mut sweeps = 0;
    let mut next_polish = POLISH_MIN_SWEEPS;
    loop {
        let d = sweep(&mut set.iter().copied(), beta, r, b0);
        sweeps += 1;
        if d < tol || sweeps > MAX_SWEEPS {
            break;
        }
        let active: Vec<usize> = set.iter().copied().filter(|&j| beta[j] != 0.0 || !prob.penalized[j]).collect();
        let mut last = d;
        loop {
            let d = sweep(&mut active.iter().copied(), beta, r, b0);
            sweeps += 1;
            if d < tol || sweeps > MAX_SWEEPS {
                break;
            }
            // Polish only when the observed contraction predicts a long tail.
            let rate = d / last;
            last = d;
            let remaining = if rate < 1.0 { (tol / d).ln() / rate.ln() } else { f64::INFINITY };
            if sweeps >= next_polish && remaining > POLISH_MIN_SWEEPS as f64 {
                polish(prob, w, r, beta, b0, &active, lambda);
                next_polish = sweeps + POLISH_MIN_SWEEPS;
            }
        }
    }
}

/// Active-set Newton solve with signs held fixed. A step that would flip a
/// sign is cut at the first zero crossing, that coordinate leaves the set,
/// and the reduced system is solved again. Every step lowers the objective,
/// so coordinate descent resumes from a better point either way.
fn polish(
    prob: &Problem,
    w: Option<&[f64]>,
    r: &mut [f64],
    beta: &mut [f64],
    b0: &mut f64,
    active: &[usize],
    lambda: f64,
) {
    let n = prob.n;
    // Column 0 of the local system is the intercept.
    let cols: Vec<usize> = active.iter().copied().filter(|&j| beta[j] != 0.0 || !prob.penalized[j]).collect();
    let k = cols.len() + 1;
    if k >= n {
        return;
    }
    let sw: Vec<f64> = (0..n).map(|i| w.map_or(1.0, |w| w[i].sqrt())).collect();
    let xa = DMatrix::from_fn(n, k, |i, c| sw[i] * if c == 0 { 1.0 } else { prob.col(cols[c - 1])[i] });
    let gram = xa.tr_mul(&xa) / n as f64;
    let penalized = |c: usize| c > 0 && prob.penalized[cols[c - 1]];
    let mut keep: Vec<usize> = (0..k).collect();
    loop {
        let grad = xa.tr_mul(&DVector::from_fn(n, |i, _| sw[i] * r[i])) / n as f64;
        let m = keep.len();
        let sub = DMatrix::from_fn(m, m, |a, b| gram[(keep[a], keep[b])]);
        let rhs = DVector::from_fn(m, |a, _| {
            let c = keep[a];
            grad[c] - if penalized(c) { lambda * beta[cols[c - 1]].signum() } else { 0.0 }
        });
        let Some(chol) = sub.cholesky() else {
            return;
        };
        let delta = chol.solve(&rhs);
        if delta.iter().any(|d| !d.is_finite()) {
            return;
        }
        let mut step = 1.0;
        let mut blocking = None;
        for (a, &c) in keep.iter().enumerate() {
            if penalized(c) {
                let b = beta[cols[c - 1]];
                if b * delta[a] < 0.0 && -b / delta[a] < step {
                    step = -b / delta[a];
                    blocking = Some(a);
                }
            }
        }
        for (a, &c) in keep.iter().enumerate() {
            let d = step * delta[a];
            if c == 0 {
                *b0 += d;
                r.iter_mut().for_each(|ri| *ri -= d);
            } else {
                beta[cols[c - 1]] += d;
                r.iter_mut().zip(prob.col(cols[c - 1])).for_each(|(ri, x)| *ri -= d * x);
            }
        }
        let Some(a) = blocking else {
            return;
        };
        let j = cols[keep[a] - 1];
        let b = beta[j];
        r.iter_mut().zip(prob.col(j)).for_each(|(ri, x)| *ri += b * x);
        beta[j] = 0.0;
        keep.remove(a);
    }
}

/// Gaussian coordinate descent in covariance form. Columns are centered, so
/// the intercept stays at the response mean and only the slope gradients
/// `g_j = x_j^T (y - X beta) / n` over `set` are tracked.
fn covariance_descent(prob: &Problem, beta: &mut [f64], set: &[usize], lambda: f64, tol: f64) {
    let n = prob.n as f64;
    let ybar = prob.y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = prob.y.iter().map(|y| y - ybar).collect();
    let mut g = vec![0.0; prob.m()];
    for &j in set {
        g[j] = dot(prob.col(j), &yc) / n;
    }
    for k in (0..prob.m()).filter(|&k| beta[k] != 0.0) {
        let gk = prob.gram_col(k);
        for &j in set {
            g[j] -= gk[j] * beta[k];
        }
    }
    let shift = |g: &mut [f64], k: usize, delta: f64| {
        let gk = prob.gram_col(k);
        for &j in set {
            g[j] -= gk[j] * delta;
        }
    };
    let sweep = |idx: &[usize], beta: &mut [f64], g: &mut [f64]| {
        let mut max_delta = 0.0f64;
        for &j in idx {
            let v = prob.gram_col(j)[j];
            let pen = if prob.penalized[j] { lambda } else { 0.0 };
            let new = soft(v * beta[j] + g[j], pen) / v;
            let delta = new - beta[j];
            if delta != 0.0 {
                shift(g, j, delta);
                beta[j] = new;
                max_delta = max_delta.max(v * delta.abs());
            }
        }
        max_delta
    };

    let mut sweeps = 0;
    let mut next_polish = POLISH_MIN_SWEEPS;
    loop {
        let d = sweep(set, beta, &mut g);
        sweeps += 1;
        if d < tol || sweeps > MAX_SWEEPS {
            break;
        }
        let active: Vec<usize> = set.iter().copied().filter(|&j| beta[j] != 0.0 || !prob.penalized[j]).collect();
        let mut last = d;
        loop {
            let d = sweep(&active, beta, &mut g);
            sweeps += 1;
            if d < tol || sweeps > MAX_SWEEPS {
                break;
            }
            let rate = d / last;
            last = d;
            let remaining = if rate < 1.0 { (tol / d).ln() / rate.ln() } else { f64::INFINITY };
            if sweeps >= next_polish && remaining > POLISH_MIN_SWEEPS as f64 {
                polish_covariance(prob, &mut g, beta, &active, lambda, &shift);
                next_polish = sweeps + POLISH_MIN_SWEEPS;
            }
        }
    }
}

/// [`polish`] for [`covariance_descent`], reading the system from the cached
/// Gram columns.
fn polish_covariance(
    prob: &Problem,
    g: &mut [f64],
    beta: &mut [f64],
    active: &[usize],
    lambda: f64,
    shift: &dyn Fn(&mut [f64], usize, f64),
) {
    let mut keep: Vec<usize> = active.iter().copied().filter(|&j| beta[j] != 0.0 || !prob.penalized[j]).collect();
    if keep.len() >= prob.n {
        return;
    }
    loop {
        let m = keep.len();
        let sub = DMatrix::from_fn(m, m, |a, b| prob.gram_col(keep[b])[keep[a]]);
        let rhs = DVector::from_fn(m, |a, _| {
            let j = keep[a];
            g[j] - if prob.penalized[j] { lambda * beta[j].signum() } else { 0.0 }
        });
        let Some(chol) = sub.cholesky() else {
            return;
        };
        let delta = chol.solve(&rhs);
        if delta.iter().any(|d| !d.is_finite()) {
            return;
        }
        let mut step = 1.0;
        let mut blocking = None;
        for (a, &j) in keep.iter().enumerate() {
            if prob.penalized[j] && beta[j] * delta[a] < 0.0 && -beta[j] / delta[a] < step {
                step = -beta[j] / delta[a];
                blocking = Some(a);
            }
        }
        for (a, &j) in keep.iter().enumerate() {
            let d = step * delta[a];
            beta[j] += d;
            shift(g, j, d);
        }
        let Some(a) = blocking else {
            return;
        };
        let j = keep.remove(a);
        shift(g, j, -beta[j]);
        beta[j] = 0.0;
    }
}

fn binomial_objective(prob: &Problem, state: &State, lambda: f64) -> f64 {
    let nll: f64 = prob
        .y
        .iter()
        .zip(&state.eta)
        .map(|(&y, &e)| {
            let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            log1pexp - y * e
        })
        .sum::<f64>()
        / prob.n as f64;
    let pen: f64 = state.beta.iter().zip(&prob.penalized).filter(|(_, &p)| p).map(|(b, _)| b.abs()).sum();
    nll + lambda * pen
}

/// Solves the penalized problem at `lambda` over coordinates in `set`,
/// warm-started from `state`.
fn solve_on_set(prob: &Problem, state: &mut State, set: &[usize], lambda: f64, tol: f64) {
    let n = prob.n;
    match prob.family {
        // Gram columns cost O(n m) each, which only pays off for tall designs.
        Family::Gaussian if prob.m() < prob.n => {
            covariance_descent(prob, &mut state.beta, set, lambda, tol);
            state.recompute_eta(prob);
        }
        Family::Gaussian => {
            let mut r: Vec<f64> = prob.y.iter().zip(&state.eta).map(|(y, e)| y - e).collect();
            let v = vec![1.0; prob.m()];
            coordinate_descent(prob, None, &v, &mut r, &mut state.beta, &mut state.b0, set, lambda, tol);
            for ((e, y), r) in state.eta.iter_mut().zip(&prob.y).zip(&r) {
                *e = y - r;
            }
        }
        Family::Binomial => {
            let mut v = vec![1.0; prob.m()];
            let mut obj = binomial_objective(prob, state, lambda);
            // Inner solves tighten as the outer iterates settle.
            let mut inner_tol = tol.max(1e-4);
            for _ in 0..MAX_OUTER {
                let mu: Vec<f64> = state.eta.iter().map(|&e| expit(e)).collect();
                let w: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).max(MIN_WEIGHT)).collect();
                let r0: Vec<f64> = (0..n).map(|i| (prob.y[i] - mu[i]) / w[i]).collect();
                for &j in set {
                    let xj = prob.col(j);
                    v[j] = dot3(xj, xj, &w) / n as f64;
                }
                let old = state.clone();
                let mut r = r0.clone();
                coordinate_descent(prob, Some(&w), &v, &mut r, &mut state.beta, &mut state.b0, set, lambda, inner_tol);
                for i in 0..n {
                    state.eta[i] += r0[i] - r[i];
                }
                let mut new_obj = binomial_objective(prob, state, lambda);
                let mut halvings = 0;
                while new_obj > obj + 1e-14 * obj.abs() && halvings < 30 {
                    for (b, ob) in state.beta.iter_mut().zip(&old.beta) {
                        *b = 0.5 * (*b + ob);
                    }
                    state.b0 = 0.5 * (state.b0 + old.b0);
                    state.recompute_eta(prob);
                    new_obj = binomial_objective(prob, state, lambda);
                    halvings += 1;
                }
                let change = set
                    .iter()
                    .map(|&j| v[j] * (state.beta[j] - old.beta[j]).abs())
                    .fold((state.b0 - old.b0).abs() * 0.25, f64::max);
                obj = new_obj;
                if change < tol && inner_tol <= tol {
                    break;
                }
                inner_tol = tol.max(inner_tol.min(1e-2 * change));
            }
        }
    }
}

/// Gradient of the smooth part, `(1/n) X^T (y - mu)`, for every column.
fn score(prob: &Problem, state: &State) -> Vec<f64> {
    let resid: Vec<f64> = prob.y.iter().zip(&state.eta).map(|(&y, &e)| y - prob.family.inverse_link(e)).collect();
    (0..prob.m()).map(|j| if prob.usable[j] { dot(prob.col(j), &resid) / prob.n as f64 } else { 0.0 }).collect()
}

struct PathSolver<'a> {
    prob: &'a Problem,
    state: State,
    grad: Vec<f64>,
    last_lambda: f64,
    tol: f64,
    null_dev: f64,
    /// Fraction of null deviance explained, current and previous step.
    ratio: f64,
    prev_ratio: f64,
    steps: usize,
}

fn deviance(prob: &Problem, state: &State) -> f64 {
    match prob.family {
        Family::Gaussian => prob.y.iter().zip(&state.eta).map(|(y, e)| (y - e) * (y - e)).sum(),
        Family::Binomial => {
            2.0 * prob
                .y
                .iter()
                .zip(&state.eta)
                .map(|(&y, &e)| {
                    let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                    log1pexp - y * e
                })
                .sum::<f64>()
        }
    }
}

/// Path termination for cross-validation, as in glmnet: near-saturated
/// fits, negligible deviance gain, or as many active columns as rows.
const MIN_PATH: usize = 5;
const MAX_DEV_RATIO: f64 = 0.999;
const MIN_DEV_GAIN: f64 = 1e-5;

impl<'a> PathSolver<'a> {
    /// Starts at the null fit: unpenalized coordinates only.
    fn new(prob: &'a Problem, tol: f64) -> Self {
        let mut state = State::zero(prob);
        let unpen: Vec<usize> = (0..prob.m()).filter(|&j| !prob.penalized[j] && prob.usable[j]).collect();
        solve_on_set(prob, &mut state, &unpen, f64::INFINITY, tol);
        let grad = score(prob, &state);
        let null_dev = deviance(prob, &state);
        Self { prob, state, grad, last_lambda: f64::INFINITY, tol, null_dev, ratio: 0.0, prev_ratio: 0.0, steps: 0 }
    }

    fn saturated(&self) -> bool {
        let active = (0..self.prob.m()).filter(|&j| self.state.beta[j] != 0.0).count();
        if active + 1 >= self.prob.n {
            return true;
        }
        self.steps >= MIN_PATH
            && (self.ratio > MAX_DEV_RATIO || self.ratio - self.prev_ratio < MIN_DEV_GAIN * self.ratio)
    }

    fn lambda_max(&self) -> f64 {
        (0..self.prob.m()).filter(|&j| self.prob.penalized[j]).map(|j| self.grad[j].abs()).fold(0.0, f64::max)
    }

    fn step(&mut self, lambda: f64) {
        let prob = self.prob;
        let cut = if self.last_lambda.is_finite() { 2.0 * lambda - self.last_lambda } else { lambda };
        let mut in_set: Vec<bool> = (0..prob.m())
            .map(|j| prob.usable[j] && (!prob.penalized[j] || self.state.beta[j] != 0.0 || self.grad[j].abs() >= cut))
            .collect();
        loop {
            let set: Vec<usize> = (0..prob.m()).filter(|&j| in_set[j]).collect();
            solve_on_set(prob, &mut self.state, &set, lambda, self.tol);
            self.grad = score(prob, &self.state);
            let mut violated = false;
            for (j, inside) in in_set.iter_mut().enumerate() {
                if prob.usable[j] && !*inside && self.grad[j].abs() > lambda {
                    *inside = true;
                    violated = true;
                }
            }
            if !violated {
                break;
            }
        }
        self.last_lambda = lambda;
        self.steps += 1;
        self.prev_ratio = self.ratio;
        if self.null_dev > 0.0 {
            self.ratio = 1.0 - deviance(prob, &self.state) / self.null_dev;
        }
    }

    fn point(&self, lambda: f64) -> LassoPathPoint {
        let prob = self.prob;
        let mut coef = vec![0.0; prob.p];
        let mut intercept = self.state.b0;
        let mut treatment_coef = None;
        for j in 0..prob.m() {
            let b = if prob.usable[j] { self.state.beta[j] / prob.scale[j] } else { 0.0 };
            intercept -= b * prob.mean[j];
            match prob.source[j] {
                Some(k) => coef[k] = b,
                None => treatment_coef = Some(b),
            }
        }
        LassoPathPoint { lambda, coef, intercept, treatment_coef }
    }
}

fn geometric_grid(lambda_max: f64, cfg: &LassoConfig) -> Vec<f64> {
    let k = cfg.n_lambda.max(1);
    if k == 1 {
        return vec![lambda_max];
    }
    (0..k).map(|i| lambda_max * cfg.lambda_min_ratio.powf(i as f64 / (k - 1) as f64)).collect()
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.n() < 10 {
        return Err(Error::Dimension(format!("lasso needs n >= 10, got {}", data.n())));
    }
    Ok(())
}

/// The cross-validation grid: `n_lambda` points from the smallest penalty
/// that zeroes every covariate down to `lambda_min_ratio` times it.
pub fn lambda_grid(data: &Dataset, target: Target, cfg: &LassoConfig) -> Result<Vec<f64>> {
    check_data(data)?;
    let prob = Problem::new(data, target);
    let solver = PathSolver::new(&prob, cfg.tol);
    Ok(geometric_grid(solver.lambda_max(), cfg))
}

/// Solutions at each of `lambdas` (visited in the given order, with warm
/// starts; pass them in decreasing order).
pub fn lasso_path(data: &Dataset, target: Target, lambdas: &[f64], cfg: &LassoConfig) -> Result<Vec<LassoPathPoint>> {
    check_data(data)?;
    let prob = Problem::new(data, target);
    let mut solver = PathSolver::new(&prob, cfg.tol);
    lambdas
        .iter()
        .map(|&lam| {
            if !lam.is_finite() || lam < 0.0 {
                return Err(Error::param("lambda", format!("must be finite and >= 0, got {lam}")));
            }
            solver.step(lam);
            Ok(solver.point(lam))
        })
        .collect()
}

fn heldout_loss(train: &Problem, state: &State, test: &Dataset, target: Target) -> f64 {
    let (y, family) = test.response(target);
    let n = test.n();
    let mut eta = vec![state.b0; n];
    for j in 0..train.m() {
        let b = state.beta[j];
        if b == 0.0 || !train.usable[j] {
            continue;
        }
        let raw = match train.source[j] {
            Some(k) => test.column(k),
            None => test.a(),
        };
        for (e, &v) in eta.iter_mut().zip(raw) {
            *e += b * train.transform(j, v);
        }
    }
    match family {
        Family::Gaussian => y.iter().zip(&eta).map(|(y, e)| (y - e) * (y - e)).sum(),
        Family::Binomial => y
            .iter()
            .zip(&eta)
            .map(|(&y, &e)| {
                let m = expit(e).clamp(1e-15, 1.0 - 1e-15);
                -2.0 * if y > 0.5 { m.ln() } else { (1.0 - m).ln() }
            })
            .sum(),
    }
}

/// Penalties visited past the running CV minimum before the path stops.
const CV_PATIENCE: usize = 10;

/// K-fold CV over `grid`; returns the index minimizing the pooled held-out
/// deviance. Folds advance along the grid in lockstep and stop once any fold
/// saturates or the pooled loss has not improved for `CV_PATIENCE` steps.
fn cross_validate(data: &Dataset, target: Target, grid: &[f64], cfg: &LassoConfig) -> usize {
    let n = data.n();
    let k = cfg.folds.clamp(2, n);
    let perm = rng::permutation(n, cfg.cv_seed, Stream::CvFolds);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let folds: Vec<(Problem, Dataset)> = (0..k)
        .map(|fold| {
            let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            (Problem::new(&data.subset_rows(&train_idx), target), data.subset_rows(&test_idx))
        })
        .collect();
    let solvers: Vec<Mutex<PathSolver>> =
        folds.iter().map(|(prob, _)| Mutex::new(PathSolver::new(prob, cfg.tol))).collect();
    let (mut best, mut best_loss) = (0, f64::INFINITY);
    for (idx, &lam) in grid.iter().enumerate() {
        let results = exec::map_indexed(k, |f| {
            let mut solver = solvers[f].lock().expect("fold solver poisoned");
            solver.step(lam);
            let (prob, test) = &folds[f];
            (heldout_loss(prob, &solver.state, test, target), solver.saturated())
        });
        let loss: f64 = results.iter().map(|r| r.0).sum();
        if loss < best_loss {
            (best, best_loss) = (idx, loss);
        }
        if results.iter().any(|r| r.1) || idx >= best + CV_PATIENCE {
            break;
        }
    }
    best
}

/// GLM-style standard error for each slope at the fitted weights:
/// `sqrt(phi / sum_i w_i (x_ij - xbar_w)^2)`.
fn adhoc_se(data: &Dataset, target: Target, point: &LassoPathPoint) -> Vec<Option<f64>> {
    let n = data.n();
    let (y, family) = data.response(target);
    let a = data.a();
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = point.intercept + point.treatment_coef.unwrap_or(0.0) * a[i];
            for (j, &b) in point.coef.iter().enumerate() {
                if b != 0.0 {
                    e += b * data.column(j)[i];
                }
            }
            e
        })
        .collect();
    let (w, phi) = match family {
        Family::Gaussian => {
            let rss: f64 = y.iter().zip(&eta).map(|(y, e)| (y - e) * (y - e)).sum();
            let df = 1 + usize::from(point.treatment_coef.is_some()) + point.coef.iter().filter(|&&b| b != 0.0).count();
            let dof = n.saturating_sub(df).max(1);
            (vec![1.0; n], rss / dof as f64)
        }
        Family::Binomial => (
            eta.iter()
                .map(|&e| {
                    let m = expit(e);
                    m * (1.0 - m)
                })
                .collect(),
            1.0,
        ),
    };
    let w_sum: f64 = w.iter().sum();
    (0..data.p())
        .map(|j| {
            let x = data.column(j);
            let xbar = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / w_sum;
            let ss: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xbar) * (x - xbar)).sum();
            let var = phi / ss;
            (ss > 0.0 && var > 0.0 && var.is_finite()).then(|| var.sqrt())
        })
        .collect()
}

/// Lasso fit of the outcome or treatment model. With `lambda = None` the
/// penalty is chosen by `cfg.folds`-fold cross-validation on the geometric
/// grid (minimum CV deviance).
pub fn fit_lasso(data: &Dataset, target: Target, lambda: Option<f64>, cfg: &LassoConfig) -> Result<ModelFit> {
    check_data(data)?;
    if let Some(l) = lambda {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {l}")));
        }
    }
    let prob = Problem::new(data, target);
    let mut solver = PathSolver::new(&prob, cfg.tol);
    let lambda_max = solver.lambda_max();
    let grid = geometric_grid(lambda_max, cfg);

    let chosen = match lambda {
        Some(l) => l,
        None if lambda_max > 0.0 => grid[cross_validate(data, target, &grid, cfg)],
        None => 0.0,
    };
    for &lam in grid.iter().filter(|&&g| g > chosen) {
        solver.step(lam);
    }
    if chosen < lambda_max {
        solver.step(chosen);
    }
    let point = solver.point(chosen);
    let se = adhoc_se(data, target, &point);
    let se = se
        .into_iter()
        .enumerate()
        .map(|(j, s)| if prob.usable[j + usize::from(target == Target::Outcome)] { s } else { None })
        .collect();
    Ok(ModelFit {
        coef: point.coef,
        se,
        intercept: point.intercept,
        treatment_coef: point.treatment_coef,
        treatment_se: None,
        family: prob.family,
        method: FitMethod::Lasso,
        converged: true,
    })
}
