//! Mean-replacement perturbations and the schedules that drive them.
//!
//! The individual schedule replaces one salience subset at a time. The
//! cumulative schedules replace growing unions of subsets, either most
//! relevant first (MoRF) or least relevant first (LeRF), starting from the
//! empty set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::SubsetPartition;
use crate::tensor_io::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Individual,
    CumulativeMorf,
    CumulativeLerf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPlan {
    pub schedule: Schedule,
    /// Pixel set replaced at each step, as flat spatial indices.
    pub steps: Vec<Vec<usize>>,
}

impl PerturbationPlan {
    pub fn step_sizes(&self) -> Vec<usize> {
        self.steps.iter().map(Vec::len).collect()
    }

    /// Perturbed copies of `x`, one per step.
    pub fn apply(&self, x: &ImageTensor, baseline: &[f32]) -> Result<Vec<ImageTensor>> {
        self.steps
            .iter()
            .map(|pixels| apply_replacement(x, pixels, baseline))
            .collect()
    }
}

/// Per-channel mean over all H·W pixels.
pub fn sample_mean(x: &ImageTensor) -> Vec<f32> {
    let c = x.channels();
    let mut sums = vec![0.0f64; c];
    for px in x.data().chunks_exact(c) {
        for (acc, v) in sums.iter_mut().zip(px) {
            *acc += f64::from(*v);
        }
    }
    let n = x.num_pixels() as f64;
    sums.into_iter().map(|s| (s / n) as f32).collect()
}

/// Copy of `x` with every channel of each listed pixel set to `baseline`.
pub fn apply_replacement(
    x: &ImageTensor,
    pixels: &[usize],
    baseline: &[f32],
) -> Result<ImageTensor> {
    if baseline.len() != x.channels() {
        return Err(Error::Parameter(format!(
            "baseline has {} channels, image has {}",
            baseline.len(),
            x.channels()
        )));
    }
    if !baseline.iter().all(|v| v.is_finite()) {
        return Err(Error::Parameter("baseline values must be finite".into()));
    }
    let n = x.num_pixels();
    if let Some(&bad) = pixels.iter().find(|&&p| p >= n) {
        return Err(Error::Parameter(format!(
            "pixel index {bad} out of range for {n} pixels"
        )));
    }
    let mut out = x.clone();
    for &p in pixels {
        out.pixel_mut(p).copy_from_slice(baseline);
    }
    Ok(out)
}

pub fn build_plan(partition: &SubsetPartition, schedule: Schedule) -> PerturbationPlan {
    let subsets = partition.subsets();
    let steps = match schedule {
        Schedule::Individual => subsets.to_vec(),
        Schedule::CumulativeMorf => cumulative(subsets.iter()),
        Schedule::CumulativeLerf => cumulative(subsets.iter().rev()),
    };
    PerturbationPlan { schedule, steps }
}

fn cumulative<'a>(groups: impl Iterator<Item = &'a Vec<usize>>) -> Vec<Vec<usize>> {
    let mut steps = vec![Vec::new()];
    let mut acc: Vec<usize> = Vec::new();
    for g in groups {
        acc.extend_from_slice(g);
        steps.push(acc.clone());
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_by_salience;
    use crate::tensor_io::SalienceMap;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, c: usize, data: &[f32]) -> ImageTensor {
        ImageTensor::new(h, w, c, data.to_vec()).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(sample_mean(&img(2, 2, 1, &[1.0, 2.0, 3.0, 4.0])), [2.5]);
        assert_eq!(
            sample_mean(&ImageTensor::filled(3, 2, 3, 0.25).unwrap()),
            [0.25; 3]
        );
        assert_eq!(
            sample_mean(&img(2, 1, 2, &[1.0, 10.0, 3.0, 20.0])),
            [2.0, 15.0]
        );
    }

    #[test]
    fn replacement_cases() {
        let x = img(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(apply_replacement(&x, &[], &[2.5]).unwrap(), x);
        assert_eq!(
            apply_replacement(&x, &[0, 1, 2, 3], &[2.5]).unwrap().data(),
            &[2.5; 4]
        );
        assert_eq!(
            apply_replacement(&x, &[0], &[2.5]).unwrap().data(),
            &[2.5, 2.0, 3.0, 4.0]
        );
        assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            apply_replacement(&x, &[4], &[2.5]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            apply_replacement(&x, &[0], &[1.0, 2.0]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn plan_shapes() {
        let scores: Vec<f64> = (0..100).map(|v| v as f64).collect();
        let p = partition_by_salience(&SalienceMap::new(10, 10, scores).unwrap(), 10).unwrap();

        let morf = build_plan(&p, Schedule::CumulativeMorf);
        assert_eq!(
            morf.step_sizes(),
            (0..=10).map(|t| t * 10).collect::<Vec<_>>()
        );
        assert_eq!(morf.steps[1], p.subsets()[0]);

        let ind = build_plan(&p, Schedule::Individual);
        assert_eq!(ind.steps, p.subsets());
    }

    #[test]
    fn lerf_on_uneven_partition() {
        let m = SalienceMap::new(1, 5, vec![5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let p = partition_by_salience(&m, 3).unwrap();
        let lerf = build_plan(&p, Schedule::CumulativeLerf);
        assert_eq!(lerf.step_sizes(), [0, 1, 3, 5]);
        assert_eq!(lerf.steps[1], vec![4]);
    }

    proptest! {
        #[test]
        fn replacement_idempotent_and_path_independent(
            data in proptest::collection::vec(-5.0f32..5.0, 2 * 3 * 2),
            scores in proptest::collection::vec(-1.0f64..1.0, 6),
            k in 2usize..=6,
        ) {
            let x = img(2, 3, 2, &data);
            let base = sample_mean(&x);
            let p = partition_by_salience(&SalienceMap::new(2, 3, scores).unwrap(), k).unwrap();
            for schedule in [Schedule::CumulativeMorf, Schedule::CumulativeLerf] {
                let plan = build_plan(&p, schedule);
                let mut walked = x.clone();
                for (t, step) in plan.steps.iter().enumerate() {
                    let direct = apply_replacement(&x, step, &base).unwrap();
                    prop_assert_eq!(&apply_replacement(&direct, step, &base).unwrap(), &direct);
                    if t > 0 {
                        let prev = &plan.steps[t - 1];
                        prop_assert!(step.len() > prev.len());
                        prop_assert_eq!(&step[..prev.len()], &prev[..]);
                        walked = apply_replacement(&walked, &step[prev.len()..], &base).unwrap();
                    }
                    prop_assert_eq!(&walked, &direct);
                }
            }
        }
    }
}
