use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CoefMode, ScenarioSpec, XDist};
use crate::error::{Error, Result};
use crate::estimation::{expit, Dataset, Family};
use crate::rng::{self, Stream};

/// One row of the fixed coefficient design: signs for the outcome and
/// treatment models, 1-based block number and position, and magnitude.
#[derive(Debug, Clone, Copy)]
pub struct TableRow {
    pub outcome_sign: i8,
    pub treatment_sign: i8,
    pub block: usize,
    pub index: usize,
    pub magnitude: f64,
}

const fn row(outcome_sign: i8, treatment_sign: i8, block: usize, index: usize, magnitude: f64) -> TableRow {
    TableRow { outcome_sign, treatment_sign, block, index, magnitude }
}

/// The 45 relevant variables of the fixed design.
pub const FIXED_TABLE: [TableRow; 45] = [
    row(1, 1, 1, 1, 1.25),
    row(1, 1, 1, 2, 1.0),
    row(1, 1, 1, 3, 1.0),
    row(1, 1, 1, 4, 0.75),
    row(1, 1, 2, 1, 1.25),
    row(1, 1, 3, 1, 1.0),
    row(1, 1, 4, 1, 0.75),
    row(1, -1, 5, 1, 1.0),
    row(1, -1, 5, 2, 1.0),
    row(1, -1, 6, 1, 1.0),
    row(1, -1, 7, 1, 0.75),
    row(-1, 1, 8, 1, 1.0),
    row(-1, 1, 8, 2, 1.0),
    row(-1, 1, 9, 1, 1.0),
    row(-1, 1, 10, 1, 0.75),
    row(1, 0, 11, 1, 1.25),
    row(1, 0, 11, 2, 1.0),
    row(1, 0, 11, 3, 1.0),
    row(1, 0, 11, 4, 0.75),
    row(1, 0, 12, 1, 1.25),
    row(1, 0, 13, 1, 1.0),
    row(1, 0, 14, 1, 0.75),
    row(1, 0, 15, 1, 1.0),
    row(1, 0, 15, 2, 1.0),
    row(1, 0, 16, 1, 1.0),
    row(1, 0, 17, 1, 0.75),
    row(-1, 0, 18, 1, 1.0),
    row(-1, 0, 18, 2, 1.0),
    row(-1, 0, 19, 1, 1.0),
    row(-1, 0, 20, 1, 0.75),
    row(0, 1, 21, 1, 1.25),
    row(0, 1, 21, 2, 1.0),
    row(0, 1, 21, 3, 1.0),
    row(0, 1, 21, 4, 0.75),
    row(0, 1, 22, 1, 1.25),
    row(0, 1, 23, 1, 1.0),
    row(0, 1, 24, 1, 0.75),
    row(0, -1, 25, 1, 1.0),
    row(0, -1, 25, 2, 1.0),
    row(0, -1, 26, 1, 1.0),
    row(0, -1, 27, 1, 0.75),
    row(0, 1, 28, 1, 1.0),
    row(0, 1, 28, 2, 1.0),
    row(0, 1, 29, 1, 1.0),
    row(0, 1, 30, 1, 0.75),
];

/// Columns drawn before subsetting in the fixed design.
pub const FIXED_BASE_DIM: usize = 150;

/// True relevance sets, zero-based and ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub s_y: Vec<usize>,
    pub s_a: Vec<usize>,
}

impl Truth {
    pub fn union(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.s_y.iter().chain(&self.s_a).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn intersection(&self) -> Vec<usize> {
        self.s_y.iter().copied().filter(|j| self.s_a.binary_search(j).is_ok()).collect()
    }

    /// Treatment-only variables.
    pub fn only_a(&self) -> Vec<usize> {
        self.s_a.iter().copied().filter(|j| self.s_y.binary_search(j).is_err()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub truth: Truth,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Sample average of `E[Y | A = 1, X] - E[Y | A = 0, X]`.
    pub true_ate: f64,
}

fn support(coef: &[f64]) -> Vec<usize> {
    (0..coef.len()).filter(|&j| coef[j] != 0.0).collect()
}

/// Rows of `n x dim` blockwise-Toeplitz normals, drawn row-major.
fn draw_x(spec: &ScenarioSpec, dim: usize, r: &mut impl Rng) -> Result<DMatrix<f64>> {
    let b = spec.block_size;
    let toeplitz = DMatrix::from_fn(b, b, |k, j| spec.rho.powi((k as i32 - j as i32).abs()));
    let chol = toeplitz.cholesky().ok_or_else(|| Error::param("rho", "block covariance is not positive definite"))?;
    let l = chol.l();
    let mut x = DMatrix::zeros(spec.n, dim);
    let mut z = DVector::zeros(b);
    for i in 0..spec.n {
        for block in 0..dim / b {
            z.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
            let w = &l * &z;
            for k in 0..b {
                x[(i, block * b + k)] = w[k];
            }
        }
    }
    if spec.x_dist == XDist::Binary {
        x.iter_mut().for_each(|v| *v = f64::from(*v > 0.0));
    }
    Ok(x)
}

fn random_sign(r: &mut impl Rng) -> f64 {
    if r.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draws one dataset; deterministic in `seed`.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut data_rng = rng::rng(seed, Stream::Data);
    let mut coef_rng = rng::rng(seed, Stream::Coefficients);
    let scale_x = if spec.x_dist == XDist::Binary && spec.coef_mode == CoefMode::FixedTable { 2.0 } else { 1.0 };
    let beta_base = spec.beta_base() * scale_x;
    let alpha_base = spec.alpha_base() * scale_x;

    let (x, alpha, beta) = match spec.coef_mode {
        CoefMode::RandomSigns => {
            let x = draw_x(spec, p, &mut data_rng)?;
            let mut idx: Vec<usize> = (0..p).collect();
            idx.shuffle(&mut coef_rng);
            let (both, rest) = idx.split_at(spec.n_both);
            let (y_only, rest) = rest.split_at(spec.n_outcome_only);
            let a_only = &rest[..spec.n_treatment_only];
            let mut alpha = vec![0.0; p];
            let mut beta = vec![0.0; p];
            // Signs are drawn in ascending column order so they do not depend
            // on the shuffle order.
            let mut s_y: Vec<usize> = both.iter().chain(y_only).copied().collect();
            let mut s_a: Vec<usize> = both.iter().chain(a_only).copied().collect();
            s_y.sort_unstable();
            s_a.sort_unstable();
            for &j in &s_y {
                beta[j] = beta_base * random_sign(&mut coef_rng);
            }
            for &j in &s_a {
                alpha[j] = alpha_base * random_sign(&mut coef_rng);
            }
            (x, alpha, beta)
        }
        CoefMode::FixedTable => {
            let b = spec.block_size;
            let dim = p.max(FIXED_BASE_DIM).div_ceil(b) * b;
            let full = draw_x(spec, dim, &mut data_rng)?;
            let relevant: Vec<usize> = FIXED_TABLE.iter().map(|t| (t.block - 1) * b + t.index - 1).collect();
            let nulls = (0..dim).filter(|j| !relevant.contains(j)).take(p - relevant.len());
            let cols: Vec<usize> = relevant.iter().copied().chain(nulls).collect();
            let x = DMatrix::from_fn(n, p, |i, j| full[(i, cols[j])]);
            let mut alpha = vec![0.0; p];
            let mut beta = vec![0.0; p];
            for (j, t) in FIXED_TABLE.iter().enumerate() {
                beta[j] = f64::from(t.outcome_sign) * beta_base * t.magnitude;
                alpha[j] = f64::from(t.treatment_sign) * alpha_base * t.magnitude;
            }
            (x, alpha, beta)
        }
    };

    let xa = &x * DVector::from_column_slice(&alpha);
    let xb = &x * DVector::from_column_slice(&beta);
    let a: Vec<f64> = (0..n).map(|i| f64::from(data_rng.random::<f64>() < expit(xa[i]))).collect();
    let tau = spec.tau;
    let y: Vec<f64> = (0..n)
        .map(|i| match spec.family {
            Family::Gaussian => tau * a[i] + xb[i] + data_rng.sample::<f64, _>(StandardNormal),
            Family::Binomial => f64::from(data_rng.random::<f64>() < expit(tau * a[i] + xb[i])),
        })
        .collect();
    let true_ate = match spec.family {
        Family::Gaussian => tau,
        Family::Binomial => (0..n).map(|i| expit(tau + xb[i]) - expit(xb[i])).sum::<f64>() / n as f64,
    };
    let truth = Truth { s_y: support(&beta), s_a: support(&alpha) };
    let data = Dataset::new(y, a, x, spec.family)?;
    Ok(Generated { data, truth, alpha, beta, true_ate })
}
