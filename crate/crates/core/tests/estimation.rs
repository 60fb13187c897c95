mod common;

use common::{kkt_violation, linear_data, logistic_score, normal_equations};
use mirrorsel::estimation::{fit_crossfit, fit_glm, fit_lasso, lambda_grid, lasso_path, LassoConfig};
use mirrorsel::{Family, Target};

fn glm_theta(fit: &mirrorsel::ModelFit) -> Vec<f64> {
    let mut theta = vec![fit.intercept];
    theta.extend(fit.treatment_coef);
    theta.extend(&fit.coef);
    theta
}

#[test]
fn gaussian_glm_matches_normal_equations() {
    for seed in 0..5 {
        let d = linear_data(80, 6, &[1.0, -0.5, 0.0, 0.25], Family::Gaussian, seed);
        for target in [Target::Outcome] {
            let fit = fit_glm(&d, target).unwrap();
            let oracle = normal_equations(&d, target);
            for (a, b) in glm_theta(&fit).iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn logistic_glm_zeroes_the_score() {
    for seed in 0..5 {
        let d = linear_data(300, 5, &[0.8, -0.6], Family::Binomial, seed);
        for target in [Target::Outcome, Target::Treatment] {
            let fit = fit_glm(&d, target).unwrap();
            assert!(fit.converged);
            let score = logistic_score(&d, target, &glm_theta(&fit));
            assert!(score.iter().all(|s| s.abs() < 1e-6), "{target:?}: {score:?}");
        }
    }
}

#[test]
fn lasso_path_satisfies_kkt() {
    let cfg = LassoConfig::default();
    let cases = [
        (120, 20, Family::Gaussian),
        (60, 150, Family::Gaussian),
        (200, 30, Family::Binomial),
        (80, 120, Family::Binomial),
    ];
    for (seed, &(n, p, family)) in cases.iter().enumerate() {
        let d = linear_data(n, p, &[1.0, -1.0, 0.5, 0.0, 0.7], family, seed as u64);
        for target in [Target::Outcome, Target::Treatment] {
            let grid = lambda_grid(&d, target, &cfg).unwrap();
            let path = lasso_path(&d, target, &grid, &cfg).unwrap();
            for point in &path {
                let v = kkt_violation(&d, target, point, point.lambda);
                assert!(v <= 1e-6, "n={n} p={p} {family:?} {target:?} lambda={}: {v}", point.lambda);
            }
        }
    }
}

#[test]
fn unpenalized_lasso_is_least_squares() {
    let d = linear_data(50, 3, &[1.0, -2.0, 0.5], Family::Gaussian, 11);
    let fit = fit_lasso(&d, Target::Outcome, Some(0.0), &LassoConfig::default()).unwrap();
    let oracle = normal_equations(&d, Target::Outcome);
    for (a, b) in glm_theta(&fit).iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn cv_lasso_recovers_strong_signals_in_high_dimensions() {
    let cfg = LassoConfig::default();
    let hits = (0..100)
        .filter(|&seed| {
            let d = linear_data(100, 200, &[1.0; 5], Family::Gaussian, 1000 + seed);
            let fit = fit_lasso(&d, Target::Outcome, None, &cfg).unwrap();
            fit.coef[..5].iter().all(|&c| c != 0.0)
        })
        .count();
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn crossfit_zeroes_unselected_coordinates() {
    let d = linear_data(400, 30, &[1.0, -1.0], Family::Gaussian, 5);
    let fit = fit_crossfit(&d, Target::Outcome, 3, &LassoConfig::default()).unwrap();
    assert!(fit.coef[0] > 0.5 && fit.coef[1] < -0.5);
    for (c, se) in fit.coef.iter().zip(&fit.se) {
        assert_eq!(*c == 0.0, se.is_none());
    }
}
