use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_input_shape, ModelInfo, PredictionRecord, Predictor};
use crate::error::{Error, Result};
use crate::tensor_io::ImageTensor;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `logit_c = b_c + Σ w_c · x` followed by a softmax.
///
/// Each pixel's influence on every logit is linear, so the effect of
/// mean-replacing any pixel set has a closed form. That makes it the
/// ground-truth model for the engine's own tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    info: ModelInfo,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinearModelFile {
    name: String,
    input_shape: [usize; 3],
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        let classes = weights.len();
        if classes < 2 {
            return Err(Error::Parameter(format!(
                "linear model needs at least 2 classes, got {classes}"
            )));
        }
        if biases.len() != classes {
            return Err(Error::Parameter(format!(
                "{classes} weight tensors but {} biases",
                biases.len()
            )));
        }
        if input_shape.contains(&0) {
            return Err(Error::Parameter(format!(
                "input shape must be positive, got {input_shape:?}"
            )));
        }
        let len: usize = input_shape.iter().product();
        for (c, w) in weights.iter().enumerate() {
            if w.len() != len {
                return Err(Error::Parameter(format!(
                    "class {c} weights have {} entries, input shape {input_shape:?} needs {len}",
                    w.len()
                )));
            }
        }
        let finite = weights
            .iter()
            .flatten()
            .chain(&biases)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation(
                "linear model parameters must be finite".into(),
            ));
        }
        Ok(Self {
            info: ModelInfo {
                num_classes: classes,
                input_shape,
                model_name: name.into(),
            },
            weights,
            biases,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: LinearModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Self::new(raw.name, raw.input_shape, raw.weights, raw.biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = LinearModelFile {
            name: self.info.model_name.clone(),
            input_shape: self.info.input_shape,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let text = serde_json::to_string(&raw).expect("model serialization cannot fail");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    /// Weight tensor of `class`, laid out like the image (H×W×C).
    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Same weights with `shift` added to every bias.
    pub fn with_bias_shift(&self, shift: f64) -> Result<Self> {
        let biases = self.biases.iter().map(|b| b + shift).collect();
        Self::new(
            self.info.model_name.clone(),
            self.info.input_shape,
            self.weights.clone(),
            biases,
        )
    }

    pub fn logits(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        check_input_shape(&self.info, x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                b + w
                    .iter()
                    .zip(x.data())
                    .map(|(w, v)| w * f64::from(*v))
                    .sum::<f64>()
            })
            .collect())
    }
}

impl Predictor for LinearSoftmaxModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        PredictionRecord::from_probs(softmax(&self.logits(x)?))
    }
}

/// Returns the same distribution for every correctly shaped input.
///
/// Serves as the conformance fixture for protocol round-trips.
#[derive(Debug, Clone)]
pub struct EchoPredictor {
    info: ModelInfo,
    record: PredictionRecord,
}

impl EchoPredictor {
    pub fn new(input_shape: [usize; 3], probs: Vec<f64>) -> Result<Self> {
        let record = PredictionRecord::from_probs(probs)?;
        Ok(Self {
            info: ModelInfo {
                num_classes: record.num_classes(),
                input_shape,
                model_name: "echo".into(),
            },
            record,
        })
    }
}

impl Predictor for EchoPredictor {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        check_input_shape(&self.info, x)?;
        Ok(self.record.clone())
    }
}
