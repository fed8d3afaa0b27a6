//! Cumulative-perturbation metrics: AUC, AOPC, log-odds and
//! comprehensiveness.
//!
//! All four are read off a [`PerturbationCurve`]: the target-class
//! confidence after replacing the top (MoRF) or bottom (LeRF) `t` salience
//! subsets, for `t = 0..=K`.
//!
//! Conventions:
//! - AOPC averages over all `K + 1` steps, including `t = 0`.
//! - LOdds and Comp average over steps `t = 1..=K`.
//! - LOdds is `ln((c_t + ε) / (c_0 + ε))` with `ε = LODDS_EPSILON`.
//! - AUC integrates with the trapezoid rule over the removed fraction `t / K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::partition_by_salience;
use crate::perturbation::{build_plan, sample_mean, Schedule};
use crate::predictor::{PredictionRecord, Predictor};
use crate::tensor_io::{ImageTensor, SalienceMap};

pub const LODDS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalOrder {
    /// Most relevant first.
    Morf,
    /// Least relevant first.
    Lerf,
}

impl RemovalOrder {
    pub fn schedule(self) -> Schedule {
        match self {
            RemovalOrder::Morf => Schedule::CumulativeMorf,
            RemovalOrder::Lerf => Schedule::CumulativeLerf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub order: RemovalOrder,
    pub fractions: Vec<f64>,
    pub confidences: Vec<f64>,
    /// Whether the prediction still equals the original class at each step.
    pub correct: Vec<bool>,
}

impl PerturbationCurve {
    /// Assembles a curve from the unperturbed record and the records for
    /// steps `1..=K`.
    pub fn from_records(
        order: RemovalOrder,
        base: &PredictionRecord,
        steps: &[PredictionRecord],
        target_class: usize,
    ) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Parameter(
                "a curve needs at least one perturbed step".into(),
            ));
        }
        let k = steps.len();
        let mut fractions = Vec::with_capacity(k + 1);
        let mut confidences = Vec::with_capacity(k + 1);
        let mut correct = Vec::with_capacity(k + 1);
        for (t, rec) in std::iter::once(base).chain(steps).enumerate() {
            fractions.push(t as f64 / k as f64);
            confidences.push(rec.prob(target_class)?);
            correct.push(rec.predicted_class == target_class);
        }
        Ok(Self {
            order,
            fractions,
            confidences,
            correct,
        })
    }

    pub fn k(&self) -> usize {
        self.confidences.len() - 1
    }
}

/// Cumulative curve for one map: `1 + k` predictions.
pub fn build_curve(
    x: &ImageTensor,
    map: &SalienceMap,
    predictor: &dyn Predictor,
    k: usize,
    order: RemovalOrder,
) -> Result<PerturbationCurve> {
    map.check_matches(x)?;
    let partition = partition_by_salience(map, k)?;
    let plan = build_plan(&partition, order.schedule());
    let images = plan.apply(x, &sample_mean(x))?;
    let base = predictor.predict(x)?;
    let steps = predictor.predict_batch(&images[1..])?;
    PerturbationCurve::from_records(order, &base, &steps, base.predicted_class)
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Area under the MoRF confidence curve. Lower is better.
pub fn auc_score(curve: &PerturbationCurve) -> f64 {
    trapezoid(&curve.fractions, &curve.confidences)
}

/// Mean confidence drop over all steps including `t = 0`. Higher is better.
pub fn aopc_score(curve: &PerturbationCurve) -> f64 {
    let c0 = curve.confidences[0];
    curve.confidences.iter().map(|c| c0 - c).sum::<f64>() / curve.confidences.len() as f64
}

/// Mean log ratio of perturbed to original confidence. Lower is better.
pub fn lodds_score(curve: &PerturbationCurve) -> f64 {
    let c0 = curve.confidences[0];
    let steps = &curve.confidences[1..];
    steps
        .iter()
        .map(|c| ((c + LODDS_EPSILON) / (c0 + LODDS_EPSILON)).ln())
        .sum::<f64>()
        / steps.len() as f64
}

/// Mean confidence drop under LeRF removal. Lower is better.
pub fn comp_score(curve: &PerturbationCurve) -> f64 {
    let c0 = curve.confidences[0];
    let steps = &curve.confidences[1..];
    steps.iter().map(|c| c0 - c).sum::<f64>() / steps.len() as f64
}

/// Dataset-level AUC: trapezoid over the fraction of samples still
/// classified as originally predicted at each step.
pub fn accuracy_auc(curves: &[PerturbationCurve]) -> Result<f64> {
    let Some(first) = curves.first() else {
        return Err(Error::Parameter(
            "accuracy AUC needs at least one curve".into(),
        ));
    };
    if curves.iter().any(|c| c.fractions != first.fractions) {
        return Err(Error::Parameter(
            "curves must share the same fractions".into(),
        ));
    }
    let n = curves.len() as f64;
    let accuracy: Vec<f64> = (0..first.fractions.len())
        .map(|t| curves.iter().filter(|c| c.correct[t]).count() as f64 / n)
        .collect();
    Ok(trapezoid(&first.fractions, &accuracy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub auc: f64,
    pub aopc: f64,
    pub lodds: f64,
    pub comp: f64,
}

impl MetricScores {
    pub fn from_curves(morf: &PerturbationCurve, lerf: &PerturbationCurve) -> Result<Self> {
        if morf.order != RemovalOrder::Morf || lerf.order != RemovalOrder::Lerf {
            return Err(Error::Parameter(
                "expected a MoRF curve and a LeRF curve, in that order".into(),
            ));
        }
        Ok(Self {
            auc: auc_score(morf),
            aopc: aopc_score(morf),
            lodds: lodds_score(morf),
            comp: comp_score(lerf),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn curve(order: RemovalOrder, conf: &[f64]) -> PerturbationCurve {
        let k = conf.len() - 1;
        PerturbationCurve {
            order,
            fractions: (0..=k).map(|t| t as f64 / k as f64).collect(),
            confidences: conf.to_vec(),
            correct: vec![true; k + 1],
        }
    }

    #[test]
    fn auc_hand_cases() {
        assert_abs_diff_eq!(
            auc_score(&curve(RemovalOrder::Morf, &[1.0, 0.8, 0.0])),
            0.65,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            auc_score(&curve(RemovalOrder::Morf, &[0.4; 6])),
            0.4,
            epsilon = 1e-15
        );
        let mut collapse = vec![0.0; 11];
        collapse[0] = 0.9;
        assert_abs_diff_eq!(
            auc_score(&curve(RemovalOrder::Morf, &collapse)),
            0.9 / 2.0 * 0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn aopc_hand_cases() {
        assert_eq!(aopc_score(&curve(RemovalOrder::Morf, &[0.7; 4])), 0.0);
        // drops [0, 0.3, 0.6]
        assert_abs_diff_eq!(
            aopc_score(&curve(RemovalOrder::Morf, &[0.9, 0.6, 0.3])),
            0.3,
            epsilon = 1e-15
        );
        let mut collapse = vec![0.0; 11];
        collapse[0] = 0.9;
        assert_abs_diff_eq!(
            aopc_score(&curve(RemovalOrder::Morf, &collapse)),
            0.9 * 10.0 / 11.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lodds_hand_cases() {
        assert_eq!(lodds_score(&curve(RemovalOrder::Morf, &[0.5; 5])), 0.0);
        assert_abs_diff_eq!(
            lodds_score(&curve(RemovalOrder::Morf, &[0.8, 0.08])),
            (0.1f64).ln(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            lodds_score(&curve(RemovalOrder::Morf, &[0.8, 0.08])),
            -std::f64::consts::LN_10,
            epsilon = 1e-4
        );
    }

    #[test]
    fn comp_hand_cases() {
        assert_eq!(comp_score(&curve(RemovalOrder::Lerf, &[0.6; 3])), 0.0);
        assert_abs_diff_eq!(
            comp_score(&curve(RemovalOrder::Lerf, &[0.9, 0.4])),
            0.5,
            epsilon = 1e-15
        );
        // drops -0.1 then 0.3
        assert_abs_diff_eq!(
            comp_score(&curve(RemovalOrder::Lerf, &[0.5, 0.6, 0.2])),
            0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn accuracy_auc_averages_correct_flags() {
        let mut a = curve(RemovalOrder::Morf, &[0.9, 0.4, 0.1]);
        a.correct = vec![true, false, false];
        let mut b = curve(RemovalOrder::Morf, &[0.8, 0.7, 0.3]);
        b.correct = vec![true, true, false];
        // accuracy [1, 0.5, 0] over fractions [0, .5, 1]
        assert_abs_diff_eq!(accuracy_auc(&[a, b]).unwrap(), 0.5, epsilon = 1e-15);
        assert!(accuracy_auc(&[]).is_err());
    }

    #[test]
    fn scores_require_matching_orders() {
        let m = curve(RemovalOrder::Morf, &[0.9, 0.5]);
        let l = curve(RemovalOrder::Lerf, &[0.9, 0.8]);
        assert!(MetricScores::from_curves(&m, &l).is_ok());
        assert!(MetricScores::from_curves(&l, &m).is_err());
    }

    proptest! {
        #[test]
        fn curve_identities(conf in proptest::collection::vec(0.0f64..=1.0, 2..22)) {
            let c = curve(RemovalOrder::Morf, &conf);
            let auc = auc_score(&c);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&auc));

            let mean = conf.iter().sum::<f64>() / conf.len() as f64;
            prop_assert!((aopc_score(&c) - (conf[0] - mean)).abs() <= 1e-12);

            // Direct re-summation of the log-odds definition.
            let mut direct = 0.0;
            for t in 1..conf.len() {
                direct += (conf[t] + 1e-12).ln() - (conf[0] + 1e-12).ln();
            }
            direct /= (conf.len() - 1) as f64;
            prop_assert!((lodds_score(&c) - direct).abs() <= 1e-9);
        }
    }
}
