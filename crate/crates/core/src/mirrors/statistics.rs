//! Mirror statistic constructions.
//!
//! Unified mirrors work on the 2-vectors `T_j = (z_alpha, z_beta)` from each
//! split, in polar form `(r, theta)`. All angular terms are evaluated from
//! the Cartesian components (`cos(theta1 - theta2) = T1.T2 / (r1 r2)`,
//! `sin 2 theta = 2 t_a t_b / r^2`), which is exact on the axes and avoids
//! round-off in `atan2`.

use serde::{Deserialize, Serialize};

use super::Criterion;
use crate::error::{Error, Result};
use crate::estimation::StandardizedPair;

/// `sign` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-variable mirror statistics, either one vector or an outcome/treatment
/// pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MirrorSet {
    Single { m: Vec<f64>, criterion: Criterion },
    Paired { m_y: Vec<f64>, m_a: Vec<f64>, criterion: Criterion },
}

/// Concordance of the two split vectors (the angular factor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Concordance {
    CosDelta,
    SignCosDelta,
}

/// Signal intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intensity {
    SumRadii,
    ProductRadii,
    SumMaxAbs,
    ProductMaxAbs,
    SumMinAbs,
    ProductMinAbs,
}

/// Axis-symmetry factor used for the minimal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisTerm {
    Sin2Product,
    SignSin2Product,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalForm {
    pub concordance: Concordance,
    pub intensity: Intensity,
    pub axis: AxisTerm,
}

impl FunctionalForm {
    /// Inner product of the two split vectors.
    pub const UNION_DEFAULT: Self =
        Self { concordance: Concordance::CosDelta, intensity: Intensity::ProductRadii, axis: AxisTerm::None };

    pub const MINIMAL_DEFAULT: Self = Self {
        concordance: Concordance::SignCosDelta,
        intensity: Intensity::ProductMinAbs,
        axis: AxisTerm::SignSin2Product,
    };

    pub fn default_for(criterion: Criterion) -> Self {
        match criterion {
            Criterion::And => Self::MINIMAL_DEFAULT,
            _ => Self::UNION_DEFAULT,
        }
    }

    pub fn validate(&self, criterion: Criterion) -> Result<()> {
        let bad = |reason: &str| Err(Error::param("form", reason.to_string()));
        match criterion {
            Criterion::Or => {
                if self.axis != AxisTerm::None {
                    return bad("the union-set mirror takes no axis term");
                }
                if matches!(self.intensity, Intensity::SumMinAbs | Intensity::ProductMinAbs) {
                    return bad("min-abs intensities are reserved for the minimal set");
                }
            }
            Criterion::And => {
                if self.axis == AxisTerm::None {
                    return bad("the minimal-set mirror needs an axis term");
                }
                if matches!(self.intensity, Intensity::SumMaxAbs | Intensity::ProductMaxAbs) {
                    return bad("max-abs intensities are reserved for the union set");
                }
            }
            Criterion::SingleModel => return bad("unified mirrors need the OR or AND criterion"),
        }
        Ok(())
    }

    /// All valid forms for a criterion.
    pub fn all_for(criterion: Criterion) -> Vec<Self> {
        let concordances = [Concordance::CosDelta, Concordance::SignCosDelta];
        let intensities = [
            Intensity::SumRadii,
            Intensity::ProductRadii,
            Intensity::SumMaxAbs,
            Intensity::ProductMaxAbs,
            Intensity::SumMinAbs,
            Intensity::ProductMinAbs,
        ];
        let axes = [AxisTerm::Sin2Product, AxisTerm::SignSin2Product, AxisTerm::None];
        let mut out = Vec::new();
        for &concordance in &concordances {
            for &intensity in &intensities {
                for &axis in &axes {
                    let form = Self { concordance, intensity, axis };
                    if form.validate(criterion).is_ok() {
                        out.push(form);
                    }
                }
            }
        }
        out
    }

    /// Mirror value for one variable from its two split vectors.
    pub fn evaluate(&self, t1: [f64; 2], t2: [f64; 2]) -> f64 {
        let r1 = t1[0].hypot(t1[1]);
        let r2 = t2[0].hypot(t2[1]);
        if r1 == 0.0 || r2 == 0.0 || !r1.is_finite() || !r2.is_finite() {
            return 0.0;
        }
        let inner = t1[0] * t2[0] + t1[1] * t2[1];
        let concordance = match self.concordance {
            Concordance::CosDelta => inner / (r1 * r2),
            Concordance::SignCosDelta => sign(inner),
        };
        let max_abs = |t: [f64; 2]| t[0].abs().max(t[1].abs());
        let min_abs = |t: [f64; 2]| t[0].abs().min(t[1].abs());
        let intensity = match self.intensity {
            Intensity::SumRadii => r1 + r2,
            Intensity::ProductRadii => r1 * r2,
            Intensity::SumMaxAbs => max_abs(t1) + max_abs(t2),
            Intensity::ProductMaxAbs => max_abs(t1) * max_abs(t2),
            Intensity::SumMinAbs => min_abs(t1) + min_abs(t2),
            Intensity::ProductMinAbs => min_abs(t1) * min_abs(t2),
        };
        concordance * intensity * self.axis_value(t1, t2)
    }

    /// The axis factor alone: `sin 2 theta_1 * sin 2 theta_2`, its sign, or 1.
    /// Uses `sin 2 theta = 2 x y / r^2`.
    pub fn axis_value(&self, t1: [f64; 2], t2: [f64; 2]) -> f64 {
        match self.axis {
            AxisTerm::None => 1.0,
            AxisTerm::Sin2Product => {
                let sin2 = |t: [f64; 2]| {
                    let r2 = t[0] * t[0] + t[1] * t[1];
                    if r2 > 0.0 {
                        2.0 * t[0] * t[1] / r2
                    } else {
                        0.0
                    }
                };
                sin2(t1) * sin2(t2)
            }
            AxisTerm::SignSin2Product => sign(t1[0] * t1[1]) * sign(t2[0] * t2[1]),
        }
    }
}

/// `M_j = sign(t1_j t2_j) (|t1_j| + |t2_j|)`.
pub fn original_mirror(t1: &[f64], t2: &[f64]) -> Result<Vec<f64>> {
    if t1.len() != t2.len() {
        return Err(Error::Dimension(format!("mirror inputs differ in length: {} vs {}", t1.len(), t2.len())));
    }
    Ok(t1
        .iter()
        .zip(t2)
        .map(|(&a, &b)| {
            let m = sign(a * b) * (a.abs() + b.abs());
            if m.is_finite() {
                m
            } else {
                0.0
            }
        })
        .collect())
}

/// Outcome-model and treatment-model mirrors from the same split pair.
pub fn paired_mirrors(pair: &StandardizedPair, criterion: Criterion) -> MirrorSet {
    let col = |rows: &[[f64; 2]], k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    let m_y = original_mirror(&col(&pair.t1, 1), &col(&pair.t2, 1)).expect("equal lengths");
    let m_a = original_mirror(&col(&pair.t1, 0), &col(&pair.t2, 0)).expect("equal lengths");
    MirrorSet::Paired { m_y, m_a, criterion }
}

fn unified(pair: &StandardizedPair, form: &FunctionalForm, criterion: Criterion) -> Result<MirrorSet> {
    form.validate(criterion)?;
    if pair.t1.len() != pair.t2.len() {
        return Err(Error::Dimension("split pair rows differ".into()));
    }
    let m = pair
        .t1
        .iter()
        .zip(&pair.t2)
        .map(|(&a, &b)| {
            let v = form.evaluate(a, b);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        })
        .collect();
    Ok(MirrorSet::Single { m, criterion })
}

/// `M_j^OR = f1(theta1, theta2) * f2(T1, T2)`.
pub fn unified_or_mirror(pair: &StandardizedPair, form: &FunctionalForm) -> Result<MirrorSet> {
    unified(pair, form, Criterion::Or)
}

/// `M_j^AND = f1 * f2 * f3(theta1, theta2)`.
pub fn unified_and_mirror(pair: &StandardizedPair, form: &FunctionalForm) -> Result<MirrorSet> {
    unified(pair, form, Criterion::And)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(pair: &StandardizedPair, form: &FunctionalForm, c: Criterion) -> Vec<f64> {
        match unified(pair, form, c).unwrap() {
            MirrorSet::Single { m, .. } => m,
            _ => unreachable!(),
        }
    }

    fn pair(t1: [f64; 2], t2: [f64; 2]) -> StandardizedPair {
        StandardizedPair { t1: vec![t1], t2: vec![t2] }
    }

    #[test]
    fn original_examples() {
        assert_eq!(original_mirror(&[2.0, 2.0, 0.0], &[3.0, -3.0, 3.0]).unwrap(), vec![5.0, -5.0, 0.0]);
        assert!(original_mirror(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn unified_or_examples() {
        let f = FunctionalForm::UNION_DEFAULT;
        assert_eq!(single(&pair([1.0, 0.0], [1.0, 0.0]), &f, Criterion::Or), vec![1.0]);
        assert_eq!(single(&pair([0.0, 1.0], [0.0, -1.0]), &f, Criterion::Or), vec![-1.0]);
        assert_eq!(single(&pair([3.0, 4.0], [3.0, 4.0]), &f, Criterion::Or), vec![25.0]);
        assert_eq!(single(&pair([0.0, 0.0], [3.0, 4.0]), &f, Criterion::Or), vec![0.0]);
    }

    #[test]
    fn unified_and_examples() {
        let f = FunctionalForm::MINIMAL_DEFAULT;
        assert_eq!(single(&pair([1.0, 1.0], [1.0, 1.0]), &f, Criterion::And), vec![1.0]);
        assert_eq!(single(&pair([1.0, 1.0], [-1.0, -1.0]), &f, Criterion::And), vec![-1.0]);
        assert_eq!(single(&pair([1.0, 0.0], [2.0, 3.0]), &f, Criterion::And), vec![0.0]);
        let g = FunctionalForm { axis: AxisTerm::Sin2Product, ..f };
        assert_eq!(single(&pair([1.0, 0.0], [2.0, 3.0]), &g, Criterion::And), vec![0.0]);
    }

    #[test]
    fn hand_evaluated_forms() {
        // T1 = (1, 2), T2 = (2, 1): r1 = r2 = sqrt(5), inner = 4.
        let t1 = [1.0, 2.0];
        let t2 = [2.0, 1.0];
        let r = 5f64.sqrt();
        let cos = 4.0 / 5.0;
        let sin2 = 2.0 * 2.0 / 5.0;
        let cases = [
            (Concordance::CosDelta, Intensity::SumRadii, AxisTerm::None, cos * 2.0 * r),
            (Concordance::SignCosDelta, Intensity::SumMaxAbs, AxisTerm::None, 4.0),
            (Concordance::CosDelta, Intensity::ProductMaxAbs, AxisTerm::None, cos * 4.0),
            (Concordance::SignCosDelta, Intensity::SumMinAbs, AxisTerm::Sin2Product, 2.0 * sin2 * sin2),
            (Concordance::CosDelta, Intensity::ProductRadii, AxisTerm::SignSin2Product, 4.0),
        ];
        for (concordance, intensity, axis, want) in cases {
            let f = FunctionalForm { concordance, intensity, axis };
            assert!((f.evaluate(t1, t2) - want).abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn form_validation() {
        assert!(FunctionalForm::MINIMAL_DEFAULT.validate(Criterion::Or).is_err());
        assert!(FunctionalForm::UNION_DEFAULT.validate(Criterion::And).is_err());
        assert_eq!(FunctionalForm::all_for(Criterion::Or).len(), 2 * 4);
        assert_eq!(FunctionalForm::all_for(Criterion::And).len(), 2 * 4 * 2);
    }
}
