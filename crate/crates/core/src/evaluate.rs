//! Five-metric evaluation of one salience map against one image.

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{MetricScores, PerturbationCurve, RemovalOrder};
use crate::partition::partition_by_salience;
use crate::perturbation::{build_plan, sample_mean, Schedule};
use crate::predictor::{PredictionRecord, Predictor};
use crate::saco::{delta_pred, saco_coefficient, FaithfulnessResult, SubsetMeasurements};
use crate::tensor_io::{ImageTensor, SalienceMap};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEvaluation {
    pub saco: FaithfulnessResult,
    pub measurements: SubsetMeasurements,
    pub target_class: usize,
    pub base: PredictionRecord,
    pub morf: PerturbationCurve,
    pub lerf: PerturbationCurve,
    pub scores: MetricScores,
}

/// SaCo plus the four cumulative metrics for one map.
///
/// Issues `1 + 3k` predictions: the unperturbed image, `k` individual
/// subset replacements, and steps `1..=k` of the MoRF and LeRF curves (step
/// 0 of both curves is the unperturbed image). All perturbed images go to the
/// predictor as one batch, so remote predictors may run them concurrently.
pub fn evaluate_sample(
    x: &ImageTensor,
    map: &SalienceMap,
    predictor: &dyn Predictor,
    k: usize,
) -> Result<SampleEvaluation> {
    map.check_matches(x)?;
    let partition = partition_by_salience(map, k)?;
    let baseline = sample_mean(x);

    let mut images = build_plan(&partition, Schedule::Individual).apply(x, &baseline)?;
    for schedule in [Schedule::CumulativeMorf, Schedule::CumulativeLerf] {
        let plan = build_plan(&partition, schedule);
        images.extend(plan.apply(x, &baseline)?.into_iter().skip(1));
    }

    let base = predictor.predict(x)?;
    let records = predictor.predict_batch(&images)?;
    let target = base.predicted_class;
    let (individual, rest) = records.split_at(k);
    let (morf_steps, lerf_steps) = rest.split_at(k);

    let dpred = individual
        .iter()
        .map(|r| delta_pred(&base, r, target))
        .collect::<Result<Vec<_>>>()?;
    let measurements = SubsetMeasurements::new(partition.subset_salience().to_vec(), dpred)?;
    let morf = PerturbationCurve::from_records(RemovalOrder::Morf, &base, morf_steps, target)?;
    let lerf = PerturbationCurve::from_records(RemovalOrder::Lerf, &base, lerf_steps, target)?;
    let scores = MetricScores::from_curves(&morf, &lerf)?;

    Ok(SampleEvaluation {
        saco: saco_coefficient(&measurements),
        measurements,
        target_class: target,
        base,
        morf,
        lerf,
        scores,
    })
}
