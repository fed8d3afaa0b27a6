//! Black-box classifiers.
//!
//! Everything the evaluators need from a model is a probability vector per
//! image. [`Predictor`] is implemented by the synthetic [`LinearSoftmaxModel`],
//! the fixed-output [`EchoPredictor`], and remote clients speaking the JSON
//! prediction protocol over HTTP or a child process's stdio.

mod cache;
mod http;
mod linear;
pub mod protocol;
pub mod server;
mod spec;
mod stdio;

pub use cache::CachingPredictor;
pub use http::HttpPredictor;
pub use linear::{softmax, EchoPredictor, LinearSoftmaxModel};
pub use spec::{PredictorSpec, RemoteOptions};
pub use stdio::StdioPredictor;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::ImageTensor;

/// Tolerance on `Σ probs = 1` for every record the engine accepts.
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;

/// A classifier's output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub probs: Vec<f64>,
    pub predicted_class: usize,
    pub confidence: f64,
}

impl PredictionRecord {
    /// Validates a probability vector and derives the argmax (lowest index
    /// wins ties).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 class probabilities, got {}",
                probs.len()
            )));
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::Validation(format!(
                "probability {i} is outside [0, 1]: {}",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Validation(format!(
                "probabilities sum to {total}, expected 1 ± {SIMPLEX_TOLERANCE}"
            )));
        }
        let mut predicted_class = 0;
        for (i, p) in probs.iter().enumerate().skip(1) {
            if *p > probs[predicted_class] {
                predicted_class = i;
            }
        }
        let confidence = probs[predicted_class];
        Ok(Self {
            probs,
            predicted_class,
            confidence,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, class: usize) -> Result<f64> {
        self.probs.get(class).copied().ok_or_else(|| {
            Error::Parameter(format!(
                "class {class} out of range for {} classes",
                self.probs.len()
            ))
        })
    }
}

/// Answer to the protocol's metadata handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub num_classes: usize,
    pub input_shape: [usize; 3],
    pub model_name: String,
}

pub trait Predictor: Send + Sync {
    fn info(&self) -> &ModelInfo;

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord>;

    /// Predictions for every image, in input order.
    ///
    /// The default runs [`Predictor::predict`] item by item and reports all
    /// failing indices together.
    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        let mut out = Vec::with_capacity(xs.len());
        let mut failed = Vec::new();
        for (i, x) in xs.iter().enumerate() {
            match self.predict(x) {
                Ok(r) => out.push(r),
                Err(e) if e.is_transport() => return Err(e),
                Err(e) => failed.push((i, e.to_string())),
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(Error::Batch { failed })
        }
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn info(&self) -> &ModelInfo {
        (**self).info()
    }
    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        (**self).predict(x)
    }
    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        (**self).predict_batch(xs)
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn info(&self) -> &ModelInfo {
        (**self).info()
    }
    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        (**self).predict(x)
    }
    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        (**self).predict_batch(xs)
    }
}

/// Rejects images whose shape differs from the model's declared input.
pub fn check_input_shape(info: &ModelInfo, x: &ImageTensor) -> Result<()> {
    if x.shape() != info.input_shape {
        return Err(Error::Parameter(format!(
            "model {:?} expects input {:?}, got {:?}",
            info.model_name,
            info.input_shape,
            x.shape()
        )));
    }
    Ok(())
}

/// Wraps a predictor and counts how many images it was asked to score.
pub struct CountingPredictor<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn info(&self) -> &ModelInfo {
        self.inner.info()
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict(x)
    }

    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        self.calls.fetch_add(xs.len(), Ordering::SeqCst);
        self.inner.predict_batch(xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let r = PredictionRecord::from_probs(vec![0.25, 0.375, 0.375]).unwrap();
        assert_eq!(r.predicted_class, 1);
        assert_eq!(r.confidence, 0.375);
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(PredictionRecord::from_probs(vec![0.5, 0.6]).is_err());
        assert!(PredictionRecord::from_probs(vec![1.2, -0.2]).is_err());
        assert!(PredictionRecord::from_probs(vec![1.0]).is_err());
        assert!(PredictionRecord::from_probs(vec![f64::NAN, 1.0]).is_err());
        assert!(PredictionRecord::from_probs(vec![0.5, 0.5 + 5e-6]).is_ok());
    }

    #[test]
    fn prob_out_of_range() {
        let r = PredictionRecord::from_probs(vec![0.5, 0.5]).unwrap();
        assert!(matches!(r.prob(2), Err(Error::Parameter(_))));
    }

    #[test]
    fn counting_counts_batch_items() {
        let echo = EchoPredictor::new([1, 1, 1], vec![0.5, 0.5]).unwrap();
        let counting = CountingPredictor::new(echo);
        let x = ImageTensor::new(1, 1, 1, vec![0.0]).unwrap();
        counting.predict(&x).unwrap();
        counting.predict_batch(&[x.clone(), x.clone(), x]).unwrap();
        assert_eq!(counting.calls(), 4);
        assert!(counting.predict_batch(&[]).unwrap().is_empty());
        assert_eq!(counting.calls(), 4);
    }
}
