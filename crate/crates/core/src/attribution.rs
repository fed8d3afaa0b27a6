//! Reference salience maps: uniform random attribution and, for linear
//! softmax models, the analytic influence map and its negation.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::perturbation::sample_mean;
use crate::predictor::{check_input_shape, LinearSoftmaxModel, Predictor};
use crate::tensor_io::{ImageTensor, SalienceMap};

/// Reproducible uniform stream backed by ChaCha20 (20 rounds).
///
/// The ChaCha20 keystream is fixed by RFC 8439, so a given seed yields the
/// same values on every platform and toolchain.
pub struct SeededGenerator {
    seed: u64,
    rng: ChaCha20Rng,
}

impl SeededGenerator {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Stream for sample `index` of a run seeded with `seed`.
    pub fn for_sample(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw from `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// i.i.d. `Uniform[0, 1)` scores.
pub fn random_attribution(
    height: usize,
    width: usize,
    gen: &mut SeededGenerator,
) -> Result<SalienceMap> {
    let scores = (0..height * width).map(|_| gen.next_unit()).collect();
    SalienceMap::new(height, width, scores)
}

/// First-order effect of mean-replacing each pixel on the target's log
/// probability:
///
/// `score_p = Σ_ch (x[p,ch] − mean[ch]) · (w_target[p,ch] − Σ_c prob_c · w_c[p,ch])`
///
/// Positive scores mark pixels whose replacement lowers the target
/// confidence. Exact per pixel for a linear-logit model.
pub fn oracle_attribution(
    model: &LinearSoftmaxModel,
    x: &ImageTensor,
    target: usize,
) -> Result<SalienceMap> {
    check_input_shape(model.info(), x)?;
    if target >= model.num_classes() {
        return Err(Error::Parameter(format!(
            "target class {target} out of range for {} classes",
            model.num_classes()
        )));
    }
    let probs = model.predict(x)?.probs;
    let mean = sample_mean(x);
    let channels = x.channels();

    let mut scores = Vec::with_capacity(x.num_pixels());
    for p in 0..x.num_pixels() {
        let mut score = 0.0;
        for (ch, v) in x.pixel(p).iter().enumerate() {
            let idx = p * channels + ch;
            let expected_w: f64 = probs
                .iter()
                .enumerate()
                .map(|(c, pc)| pc * model.weights(c)[idx])
                .sum();
            let margin = model.weights(target)[idx] - expected_w;
            score += (f64::from(*v) - f64::from(mean[ch])) * margin;
        }
        scores.push(score);
    }
    SalienceMap::new(x.height(), x.width(), scores)
}

/// Negated oracle map: ranks pixels exactly backwards.
pub fn anti_oracle_attribution(
    model: &LinearSoftmaxModel,
    x: &ImageTensor,
    target: usize,
) -> Result<SalienceMap> {
    let m = oracle_attribution(model, x, target)?;
    m.affine(-1.0, 0.0)
}
