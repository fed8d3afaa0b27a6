//! Salience-guided faithfulness coefficient.
//!
//! For every pair of subsets `i < j` the salience gap `s_i − s_j` is added
//! when the higher-ranked subset moved the prediction at least as much
//! (`∇pred_i ≥ ∇pred_j`) and subtracted otherwise. The sum is normalised by
//! the total absolute gap, giving a value in `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::partition_by_salience;
use crate::perturbation::{build_plan, sample_mean, Schedule};
use crate::predictor::{PredictionRecord, Predictor};
use crate::tensor_io::{ImageTensor, SalienceMap};

/// Per-subset salience sums and prediction drops, indexed by subset rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMeasurements {
    salience: Vec<f64>,
    dpred: Vec<f64>,
}

impl SubsetMeasurements {
    pub fn new(salience: Vec<f64>, dpred: Vec<f64>) -> Result<Self> {
        if salience.len() != dpred.len() {
            return Err(Error::Validation(format!(
                "{} salience sums but {} prediction deltas",
                salience.len(),
                dpred.len()
            )));
        }
        if salience.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 subsets, got {}",
                salience.len()
            )));
        }
        if salience.iter().chain(&dpred).any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "subset measurements must be finite".into(),
            ));
        }
        Ok(Self { salience, dpred })
    }

    pub fn k(&self) -> usize {
        self.salience.len()
    }

    pub fn salience(&self) -> &[f64] {
        &self.salience
    }

    pub fn dpred(&self) -> &[f64] {
        &self.dpred
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub total_weight: f64,
    /// Pairs where the higher-ranked subset moved the prediction less.
    pub violations: usize,
    pub pairs: usize,
}

/// Drop in the target-class probability caused by a perturbation.
///
/// Positive means confidence fell.
pub fn delta_pred(
    base: &PredictionRecord,
    perturbed: &PredictionRecord,
    target_class: usize,
) -> Result<f64> {
    if base.num_classes() != perturbed.num_classes() {
        return Err(Error::Parameter(format!(
            "records disagree on class count: {} vs {}",
            base.num_classes(),
            perturbed.num_classes()
        )));
    }
    Ok(base.prob(target_class)? - perturbed.prob(target_class)?)
}

pub fn saco_coefficient(meas: &SubsetMeasurements) -> FaithfulnessResult {
    let s = &meas.salience;
    let d = &meas.dpred;
    let k = s.len();
    let mut f = 0.0;
    let mut total_weight = 0.0;
    let mut violations = 0;
    for i in 0..k - 1 {
        for j in i + 1..k {
            let gap = s[i] - s[j];
            let weight = if d[i] >= d[j] {
                gap
            } else {
                violations += 1;
                -gap
            };
            f += weight;
            total_weight += weight.abs();
        }
    }
    // All subset saliences equal: nothing was claimed, so nothing is scored.
    let f = if total_weight == 0.0 {
        0.0
    } else {
        (f / total_weight).clamp(-1.0, 1.0)
    };
    FaithfulnessResult {
        f,
        total_weight,
        violations,
        pairs: k * (k - 1) / 2,
    }
}

/// Everything measured while scoring one salience map.
#[derive(Debug, Clone, PartialEq)]
pub struct SacoEvaluation {
    pub result: FaithfulnessResult,
    pub measurements: SubsetMeasurements,
    /// Class predicted for the unperturbed image; fixed for all deltas.
    pub target_class: usize,
    pub base: PredictionRecord,
}

/// Partitions `map`, mean-replaces each subset in turn, and scores the
/// resulting prediction drops. Issues exactly `k + 1` predictions.
pub fn evaluate_saco(
    x: &ImageTensor,
    map: &SalienceMap,
    predictor: &dyn Predictor,
    k: usize,
) -> Result<SacoEvaluation> {
    map.check_matches(x)?;
    let partition = partition_by_salience(map, k)?;
    let baseline = sample_mean(x);
    let plan = build_plan(&partition, Schedule::Individual);
    let perturbed = plan.apply(x, &baseline)?;

    let base = predictor.predict(x)?;
    let records = predictor.predict_batch(&perturbed)?;
    let target_class = base.predicted_class;
    let dpred = records
        .iter()
        .map(|r| delta_pred(&base, r, target_class))
        .collect::<Result<Vec<_>>>()?;
    let measurements = SubsetMeasurements::new(partition.subset_salience().to_vec(), dpred)?;
    Ok(SacoEvaluation {
        result: saco_coefficient(&measurements),
        measurements,
        target_class,
        base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn coeff(s: &[f64], d: &[f64]) -> FaithfulnessResult {
        saco_coefficient(&SubsetMeasurements::new(s.to_vec(), d.to_vec()).unwrap())
    }

    #[test]
    fn hand_worked_three_subsets() {
        let r = coeff(&[0.5, 0.3, 0.2], &[0.4, 0.5, 0.1]);
        assert_abs_diff_eq!(r.f, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.total_weight, 0.6, epsilon = 1e-12);
        assert_eq!(r.violations, 1);
        assert_eq!(r.pairs, 3);
    }

    #[test]
    fn agreeing_and_reversed() {
        assert_eq!(coeff(&[0.6, 0.3, 0.1], &[0.9, 0.5, 0.2]).f, 1.0);
        let rev = coeff(&[0.6, 0.3, 0.1], &[0.1, 0.5, 0.9]);
        assert_eq!(rev.f, -1.0);
        assert_eq!(rev.violations, 3);
    }

    #[test]
    fn equal_salience_is_zero() {
        let r = coeff(&[0.25; 4], &[0.1, 0.4, 0.2, 0.3]);
        assert_eq!(r.f, 0.0);
        assert_eq!(r.total_weight, 0.0);
    }

    #[test]
    fn tied_deltas_count_as_satisfied() {
        let r = coeff(&[0.7, 0.2], &[0.3, 0.3]);
        assert_eq!(r.f, 1.0);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn negative_deltas_are_not_clamped() {
        // Confidence rising on subset 0 and falling on subset 1 is a violation.
        let r = coeff(&[0.8, 0.2], &[-0.2, 0.1]);
        assert_eq!(r.f, -1.0);
    }

    #[test]
    fn delta_pred_cases() {
        let rec = |p: f64| PredictionRecord::from_probs(vec![p, 1.0 - p]).unwrap();
        assert_abs_diff_eq!(
            delta_pred(&rec(0.9), &rec(0.3), 0).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        assert_eq!(delta_pred(&rec(0.9), &rec(0.9), 0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            delta_pred(&rec(0.4), &rec(0.7), 0).unwrap(),
            -0.3,
            epsilon = 1e-15
        );
        assert!(matches!(
            delta_pred(&rec(0.4), &rec(0.7), 2),
            Err(Error::Parameter(_))
        ));
        let three = PredictionRecord::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(delta_pred(&rec(0.5), &three, 0).is_err());
    }

    #[test]
    fn measurement_validation() {
        assert!(SubsetMeasurements::new(vec![1.0], vec![0.0]).is_err());
        assert!(SubsetMeasurements::new(vec![1.0, 0.0], vec![0.0]).is_err());
        assert!(SubsetMeasurements::new(vec![1.0, f64::NAN], vec![0.0, 0.0]).is_err());
    }

    fn arb_measurements() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..16).prop_flat_map(|k| {
            (
                proptest::collection::vec(-10.0f64..10.0, k).prop_map(|mut s| {
                    s.sort_by(|a, b| b.total_cmp(a));
                    s
                }),
                proptest::collection::vec(-1.0f64..1.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn bounded((s, d) in arb_measurements()) {
            let r = coeff(&s, &d);
            prop_assert!((-1.0..=1.0).contains(&r.f));
        }

        #[test]
        fn matches_pair_enumeration((s, d) in arb_measurements()) {
            let r = coeff(&s, &d);
            let mut signed = 0.0;
            let mut total = 0.0;
            let mut bad = 0;
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if i < j {
                        let sign = if d[i] >= d[j] { 1.0 } else { bad += 1; -1.0 };
                        signed += sign * (s[i] - s[j]);
                        total += (s[i] - s[j]).abs();
                    }
                }
            }
            prop_assert_eq!(r.violations, bad);
            prop_assert!((r.f * r.total_weight - signed).abs() <= 1e-9 * total.max(1.0));
            prop_assert!((r.total_weight - total).abs() <= 1e-9 * total.max(1.0));
        }
    }
}
