use nalgebra::{DMatrix, DVector};

use super::{Dataset, Family, FitMethod, ModelFit, Target};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const DEVIANCE_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
/// Standardized coefficient magnitude taken as evidence of separation.
const SEPARATION_BOUND: f64 = 20.0;
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct IrlsFit {
    pub beta: Vec<f64>,
    /// Covariance of `beta`: inverse Fisher information times dispersion.
    pub cov: DMatrix<f64>,
    pub converged: bool,
}

fn deviance(y: &[f64], mu: &[f64], family: Family) -> f64 {
    match family {
        Family::Gaussian => y.iter().zip(mu).map(|(y, m)| (y - m) * (y - m)).sum(),
        Family::Binomial => {
            -2.0 * y
                .iter()
                .zip(mu)
                .map(|(&y, &m)| {
                    let m = m.clamp(1e-300, 1.0 - 1e-16);
                    if y > 0.5 {
                        m.ln()
                    } else {
                        (1.0 - m).ln()
                    }
                })
                .sum::<f64>()
        }
    }
}

/// Cholesky solve of a symmetric positive definite system with a
/// scale-free singularity check. Returns the solution and the inverse.
pub(crate) fn spd_solve_inverse(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    stage: &str,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = gram.nrows();
    let mut scale = DVector::zeros(k);
    for i in 0..k {
        let d = gram[(i, i)];
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::singular(stage));
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut scaled = gram.clone();
    for j in 0..k {
        for i in 0..k {
            scaled[(i, j)] *= scale[i] * scale[j];
        }
    }
    let chol = scaled.cholesky().ok_or_else(|| Error::singular(stage))?;
    let l = chol.l_dirty();
    if (0..k).any(|i| l[(i, i)] * l[(i, i)] < 1e-11) {
        return Err(Error::singular(stage));
    }
    let scaled_rhs = rhs.component_mul(&scale);
    let sol = chol.solve(&scaled_rhs).component_mul(&scale);
    let mut inv = chol.inverse();
    for j in 0..k {
        for i in 0..k {
            inv[(i, j)] *= scale[i] * scale[j];
        }
    }
    Ok((sol, inv))
}

fn weighted_normal_equations(design: &DMatrix<f64>, w: &[f64], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut xw = design.clone();
    let n = design.nrows();
    for j in 0..design.ncols() {
        let col = &mut xw.as_mut_slice()[j * n..(j + 1) * n];
        for (v, wi) in col.iter_mut().zip(w) {
            *v *= wi.sqrt();
        }
    }
    let zw = DVector::from_iterator(n, z.iter().zip(w).map(|(z, w)| z * w.sqrt()));
    (xw.tr_mul(&xw), xw.tr_mul(&zw))
}

/// Iteratively reweighted least squares for a canonical-link GLM.
/// `design` must already contain the intercept column.
pub(crate) fn irls(design: &DMatrix<f64>, y: &[f64], family: Family, stage: &str) -> Result<IrlsFit> {
    let n = design.nrows();
    let k = design.ncols();
    if n <= k {
        return Err(Error::Dimension(format!("{stage}: {n} observations for {k} parameters")));
    }
    let ones = vec![1.0; n];

    if family == Family::Gaussian {
        let (gram, rhs) = weighted_normal_equations(design, &ones, y);
        let (beta, inv) = spd_solve_inverse(&gram, &rhs, stage)?;
        let fitted = design * &beta;
        let rss = deviance(y, fitted.as_slice(), family);
        let dispersion = rss / (n - k) as f64;
        return Ok(IrlsFit { beta: beta.iter().copied().collect(), cov: inv * dispersion, converged: true });
    }

    let mut mu: Vec<f64> = y.iter().map(|&v| (v + 0.5) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|&m| (m / (1.0 - m)).ln()).collect();
    let mut beta: Option<DVector<f64>> = None;
    let mut dev_old = f64::INFINITY;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(MIN_WEIGHT)).collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / w[i]).collect();
        let (gram, rhs) = weighted_normal_equations(design, &w, &z);
        let (mut candidate, _) = spd_solve_inverse(&gram, &rhs, stage)?;

        let eval = |b: &DVector<f64>| {
            let e = design * b;
            let m: Vec<f64> = e.iter().map(|&v| super::expit(v)).collect();
            let d = deviance(y, &m, family);
            (e, m, d)
        };
        let (mut e, mut m, mut dev) = eval(&candidate);
        if let Some(prev) = &beta {
            let mut halvings = 0;
            while (!dev.is_finite() || dev > dev_old + 1e-12 * dev_old.abs()) && halvings < MAX_HALVINGS {
                candidate = (&candidate + prev) * 0.5;
                (e, m, dev) = eval(&candidate);
                halvings += 1;
            }
        }
        eta = e.iter().copied().collect();
        mu = m;
        beta = Some(candidate);
        let change = (dev - dev_old).abs() / (dev.abs() + 0.1);
        dev_old = dev;
        if change < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }

    let beta = beta.expect("at least one iteration");
    let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(MIN_WEIGHT)).collect();
    let (gram, rhs) = weighted_normal_equations(design, &w, &eta);
    let (_, inv) = spd_solve_inverse(&gram, &rhs, stage)?;
    Ok(IrlsFit { beta: beta.iter().copied().collect(), cov: inv, converged })
}

fn sd(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// MLE of the target model restricted to covariate columns `cols`. The
/// returned fit still has length-`p` vectors; excluded columns get
/// `coef = 0`, `se = None`.
pub(crate) fn fit_glm_columns(data: &Dataset, target: Target, cols: &[usize]) -> Result<ModelFit> {
    let n = data.n();
    let (y, family) = data.response(target);
    let is_zero = |c: &[f64]| c.iter().all(|&v| v == 0.0);
    // Identically-zero columns carry no information; their coefficients are
    // reported as 0 with no standard error.
    let with_treatment = target == Target::Outcome && !is_zero(data.a());
    let kept: Vec<usize> = cols.iter().copied().filter(|&j| !is_zero(data.column(j))).collect();
    let offset = 1 + usize::from(with_treatment);
    let k = offset + kept.len();

    let mut buf = Vec::with_capacity(n * k);
    buf.extend(std::iter::repeat_n(1.0, n));
    if with_treatment {
        buf.extend_from_slice(data.a());
    }
    for &j in &kept {
        buf.extend_from_slice(data.column(j));
    }
    let design = DMatrix::from_vec(n, k, buf);
    let stage = match target {
        Target::Outcome => "outcome model",
        Target::Treatment => "treatment model",
    };
    let fit = irls(&design, y, family, stage)?;

    let p = data.p();
    let mut coef = vec![0.0; p];
    let mut se = vec![None; p];
    let mut converged = fit.converged;
    let se_of = |i: usize| {
        let v = fit.cov[(i, i)];
        (v > 0.0 && v.is_finite()).then(|| v.sqrt())
    };
    for (slot, &j) in kept.iter().enumerate() {
        let i = offset + slot;
        coef[j] = fit.beta[i];
        se[j] = se_of(i);
        if family == Family::Binomial && (fit.beta[i] * sd(data.column(j))).abs() > SEPARATION_BOUND {
            se[j] = None;
            converged = false;
        }
    }
    let (treatment_coef, treatment_se) = match target {
        Target::Outcome if with_treatment => {
            let tau = fit.beta[1];
            if family == Family::Binomial && (tau * sd(data.a())).abs() > SEPARATION_BOUND {
                converged = false;
            }
            (Some(tau), se_of(1))
        }
        Target::Outcome => (Some(0.0), None),
        Target::Treatment => (None, None),
    };
    Ok(ModelFit {
        coef,
        se,
        intercept: fit.beta[0],
        treatment_coef,
        treatment_se,
        family,
        method: FitMethod::Mle,
        converged,
    })
}

/// Maximum-likelihood fit of the full outcome or treatment model.
pub fn fit_glm(data: &Dataset, target: Target) -> Result<ModelFit> {
    let (n, p) = (data.n(), data.p());
    if n <= p + 2 {
        return Err(Error::Dimension(format!("MLE needs n > p + 2, got n = {n}, p = {p}")));
    }
    let cols: Vec<usize> = (0..p).collect();
    fit_glm_columns(data, target, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn data(y: Vec<f64>, a: Vec<f64>, cols: Vec<Vec<f64>>, family: Family) -> Dataset {
        let n = y.len();
        let p = cols.len();
        let x = DMatrix::from_vec(n, p, cols.concat());
        Dataset::new(y, a, x, family).unwrap()
    }

    #[test]
    fn noiseless_linear_is_exact() {
        let x1: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let d = data(y, vec![0.0; 10], vec![x1], Family::Gaussian);
        let fit = fit_glm(&d, Target::Outcome).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert_eq!(fit.treatment_coef, Some(0.0));
        assert!(fit.converged);
    }

    #[test]
    fn collinear_columns_are_singular() {
        let x1: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x2: Vec<f64> = x1.iter().map(|v| 3.0 * v).collect();
        let y = x1.iter().map(|v| 2.0 * v + (v * 1.3).sin()).collect();
        let a = (0..10).map(|i| (i % 2) as f64).collect();
        let d = data(y, a, vec![x1, x2], Family::Gaussian);
        assert!(matches!(fit_glm(&d, Target::Outcome), Err(Error::Singular { .. })));
    }

    #[test]
    fn balanced_intercept_only_logistic() {
        let n = 20;
        let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x1 = vec![0.0; n];
        let y = vec![0.0; n];
        let d = data(y, a, vec![x1], Family::Gaussian);
        let fit = fit_glm(&d, Target::Treatment).unwrap();
        assert!(fit.intercept.abs() < 1e-12);
        assert_eq!(fit.coef[0], 0.0);
        assert_eq!(fit.se[0], None);
    }

    #[test]
    fn dimension_error_when_n_small() {
        let d = data(vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0], vec![vec![1.0, 2.0, 4.0]], Family::Gaussian);
        assert!(matches!(fit_glm(&d, Target::Outcome), Err(Error::Dimension(_))));
    }

    #[test]
    fn logistic_score_equation_holds() {
        let mut rng = crate::rng::rng(7, crate::rng::Stream::Data);
        let n = 300;
        let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let a: Vec<f64> =
            (0..n).map(|i| f64::from(rng.random::<f64>() < super::super::expit(0.3 + x1[i] - 0.5 * x2[i]))).collect();
        let d = data(vec![0.0; n], a.clone(), vec![x1.clone(), x2.clone()], Family::Gaussian);
        let fit = fit_glm(&d, Target::Treatment).unwrap();
        assert!(fit.converged);
        let mu: Vec<f64> = (0..n).map(|i| super::super::expit(fit.linear_predictor(&d, i, 0.0))).collect();
        for col in [vec![1.0; n], x1, x2] {
            let score: f64 = (0..n).map(|i| col[i] * (a[i] - mu[i])).sum();
            assert!(score.abs() < 1e-6, "score {score}");
        }
    }

    #[test]
    fn separation_is_flagged() {
        let n = 40;
        let x1: Vec<f64> = (0..n).map(|i| i as f64 - 19.5).collect();
        let a: Vec<f64> = x1.iter().map(|&v| f64::from(v > 0.0)).collect();
        let d = data(vec![0.0; n], a, vec![x1], Family::Gaussian);
        let fit = fit_glm(&d, Target::Treatment).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.se[0], None);
    }
}
