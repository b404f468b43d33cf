//! Soft- and Hard-classifier scores between a truth mask and a prediction.
//!
//! `soft = 1 - sum((truth - pred)^2) / (x * y * z)`; `hard` is the soft
//! score of the prediction thresholded at `zeta` (values strictly above
//! `zeta` become 1). Scores are not clamped, so a non-binary prediction
//! with large values can drive the soft score below zero.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// Percentile of the prediction used as `zeta` when none is given.
pub const DEFAULT_ZETA_PERCENTILE: f64 = 95.0;

fn check_dims(a: &Volume3D, b: &Volume3D) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimsMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

pub fn soft_score(truth: &Volume3D, pred: &Volume3D) -> Result<f64> {
    check_dims(truth, pred)?;
    Ok(soft_from_slices(truth.data(), pred.data()))
}

fn soft_from_slices(truth: &[f64], pred: &[f64]) -> f64 {
    let sq: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    1.0 - sq / truth.len() as f64
}

pub fn hard_score(truth: &Volume3D, pred: &Volume3D, zeta: f64) -> Result<f64> {
    check_dims(truth, pred)?;
    let thresholded: Vec<f64> = pred
        .data()
        .iter()
        .map(|&v| if v > zeta { 1.0 } else { 0.0 })
        .collect();
    Ok(soft_from_slices(truth.data(), &thresholded))
}

/// Nearest-rank percentile of the prediction values.
pub fn percentile(pred: &Volume3D, pct: f64) -> f64 {
    let mut values = pred.data().to_vec();
    values.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

pub fn default_zeta(pred: &Volume3D) -> f64 {
    percentile(pred, DEFAULT_ZETA_PERCENTILE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub soft: f64,
    pub hard: f64,
}

/// Mean and spread of one score column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Standard error of the mean, `std / sqrt(n)`.
    pub sem: f64,
}

impl ColumnStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(ColumnStats {
            mean,
            std,
            sem: std / n.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub zeta: f64,
    pub per_case: Vec<CaseScore>,
    pub soft: ColumnStats,
    pub hard: ColumnStats,
}

impl ScoreReport {
    /// Aggregates already-computed per-case scores.
    pub fn from_cases(per_case: Vec<CaseScore>, zeta: f64) -> Result<Self> {
        let soft: Vec<f64> = per_case.iter().map(|c| c.soft).collect();
        let hard: Vec<f64> = per_case.iter().map(|c| c.hard).collect();
        Ok(ScoreReport {
            zeta,
            soft: ColumnStats::from_values(&soft)?,
            hard: ColumnStats::from_values(&hard)?,
            per_case,
        })
    }

    /// Tab-separated table: one row per case and a final `MEAN ± STD` row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("case\thard\tsoft\n");
        for c in &self.per_case {
            let _ = writeln!(out, "{}\t{:.4}\t{:.4}", c.case_id, c.hard, c.soft);
        }
        let _ = writeln!(
            out,
            "MEAN ± STD\t{:.4} ± {:.4}\t{:.4} ± {:.4}",
            self.hard.mean, self.hard.std, self.soft.mean, self.soft.std
        );
        out
    }
}

/// Scores every `(case_id, truth, pred)` triple.
///
/// `zeta = None` thresholds each prediction at its own 95th percentile; the
/// reported `zeta` is then the mean of those per-case thresholds.
pub fn score_batch(
    cases: &[(String, Volume3D, Volume3D)],
    zeta: Option<f64>,
) -> Result<ScoreReport> {
    if cases.is_empty() {
        return Err(Error::Empty("score batch has no cases".into()));
    }
    let mut per_case = Vec::with_capacity(cases.len());
    let mut zetas = Vec::with_capacity(cases.len());
    for (id, truth, pred) in cases {
        let z = zeta.unwrap_or_else(|| default_zeta(pred));
        per_case.push(CaseScore {
            case_id: id.clone(),
            soft: soft_score(truth, pred)?,
            hard: hard_score(truth, pred, z)?,
        });
        zetas.push(z);
    }
    let z = zeta.unwrap_or_else(|| zetas.iter().sum::<f64>() / zetas.len() as f64);
    ScoreReport::from_cases(per_case, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn vol(data: Vec<f64>) -> Volume3D {
        let n = data.len();
        Volume3D::new([n, 1, 1], [1.0; 3], data, VolumeKind::Scalar).unwrap()
    }

    fn filled(v: f64) -> Volume3D {
        Volume3D::new([2, 2, 2], [1.0; 3], vec![v; 8], VolumeKind::Scalar).unwrap()
    }

    #[test]
    fn soft_identity_is_one() {
        let t = vol(vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(soft_score(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn soft_half_prediction() {
        assert_eq!(soft_score(&filled(0.0), &filled(0.5)).unwrap(), 0.75);
        assert_eq!(soft_score(&filled(1.0), &filled(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn soft_is_not_clamped() {
        assert_eq!(soft_score(&filled(0.0), &filled(3.0)).unwrap(), -8.0);
    }

    #[test]
    fn dims_mismatch_errors() {
        assert!(matches!(
            soft_score(&vol(vec![0.0; 3]), &vol(vec![0.0; 4])),
            Err(Error::DimsMismatch(..))
        ));
        assert!(hard_score(&vol(vec![0.0; 3]), &vol(vec![0.0; 4]), 0.5).is_err());
    }

    #[test]
    fn hard_thresholds_strictly() {
        assert_eq!(hard_score(&filled(1.0), &filled(0.6), 0.5).unwrap(), 1.0);
        // equal to zeta -> 0
        assert_eq!(hard_score(&filled(1.0), &filled(0.5), 0.5).unwrap(), 0.0);
        assert_eq!(hard_score(&filled(1.0), &filled(1e-9), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn batch_single_case() {
        let r = score_batch(&[("a".into(), filled(1.0), filled(0.6))], Some(0.5)).unwrap();
        assert_eq!(r.soft.mean, r.per_case[0].soft);
        assert_eq!(r.soft.std, 0.0);
        assert_eq!(r.hard.mean, 1.0);
    }

    #[test]
    fn two_case_population_std() {
        let cases = vec![
            CaseScore {
                case_id: "1".into(),
                soft: 0.8,
                hard: 0.8,
            },
            CaseScore {
                case_id: "2".into(),
                soft: 0.6,
                hard: 0.6,
            },
        ];
        let r = ScoreReport::from_cases(cases, 0.5).unwrap();
        assert_abs_diff_eq!(r.soft.mean, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(r.soft.std, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn empty_batch_errors() {
        assert!(score_batch(&[], None).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let p = vol((1..=20).map(|i| i as f64).collect());
        assert_eq!(percentile(&p, 95.0), 19.0);
        assert_eq!(percentile(&p, 100.0), 20.0);
        assert_eq!(percentile(&p, 0.0), 1.0);
    }

    #[test]
    fn table_has_summary_row() {
        let cases = vec![CaseScore {
            case_id: "7".into(),
            soft: 0.75,
            hard: 0.5,
        }];
        let t = ScoreReport::from_cases(cases, 0.1).unwrap().to_table();
        assert!(t.starts_with("case\thard\tsoft\n7\t0.5000\t0.7500\n"));
        assert!(t.contains("MEAN ± STD\t0.5000 ± 0.0000\t0.7500 ± 0.0000"));
    }

    proptest! {
        #[test]
        fn soft_symmetric_and_bounded(a in prop::collection::vec(0.0f64..1.0, 8), b in prop::collection::vec(0.0f64..1.0, 8)) {
            let (va, vb) = (vol(a.clone()), vol(b.clone()));
            let ab = soft_score(&va, &vb).unwrap();
            prop_assert_eq!(ab, soft_score(&vb, &va).unwrap());
            prop_assert!(ab <= 1.0);
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn hard_piecewise_constant_between_values(
            pred in prop::collection::vec(0.0f64..1.0, 10),
            truth in prop::collection::vec(0u8..2, 10),
            t in 0.0f64..1.0,
        ) {
            let tv = vol(truth.iter().map(|&x| x as f64).collect());
            let pv = vol(pred.clone());
            // move zeta anywhere inside the gap containing t without crossing a value
            let below = pred.iter().copied().filter(|&v| v <= t).fold(0.0, f64::max);
            let above = pred.iter().copied().filter(|&v| v > t).fold(1.0, f64::min);
            let mid = (below + above) / 2.0;
            prop_assert_eq!(hard_score(&tv, &pv, t).unwrap(), hard_score(&tv, &pv, mid.max(below)).unwrap());
        }

        #[test]
        fn binary_pred_hard_equals_soft(
            pred in prop::collection::vec(0u8..2, 10),
            truth in prop::collection::vec(0u8..2, 10),
            z in 0.0f64..0.999,
        ) {
            let tv = vol(truth.iter().map(|&x| x as f64).collect());
            let pv = vol(pred.iter().map(|&x| x as f64).collect());
            prop_assert_eq!(hard_score(&tv, &pv, z).unwrap(), soft_score(&tv, &pv).unwrap());
        }
    }
}
