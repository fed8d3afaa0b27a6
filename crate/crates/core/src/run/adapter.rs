use serde::{Deserialize, Serialize};

use crate::attribution::SeededGenerator;
use crate::error::Result;
use crate::predictor::{ModelInfo, PredictionRecord, Predictor, PredictorSpec, RemoteOptions};
use crate::tensor_io::ImageTensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterReport {
    pub predictor: String,
    pub model: ModelInfo,
    pub checks: Vec<AdapterCheck>,
}

impl AdapterReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, outcome: std::result::Result<String, String>) -> AdapterCheck {
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    AdapterCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn predict(p: &dyn Predictor, x: &ImageTensor) -> std::result::Result<PredictionRecord, String> {
    p.predict(x).map_err(|e| e.to_string())
}

/// Runs the protocol conformance suite against a predictor.
///
/// Fails only when the predictor cannot be reached; failed checks are
/// reported in the returned [`AdapterReport`].
pub fn validate_adapter(spec: &PredictorSpec, options: &RemoteOptions) -> Result<AdapterReport> {
    let predictor = spec.connect(options)?;
    let p = predictor.as_ref();
    let info = p.info().clone();
    let mut checks = Vec::new();

    checks.push(check(
        "handshake",
        if info.num_classes < 2 {
            Err(format!(
                "num_classes is {}, need at least 2",
                info.num_classes
            ))
        } else if info.input_shape.contains(&0) {
            Err(format!(
                "input_shape {:?} has a zero dimension",
                info.input_shape
            ))
        } else if info.model_name.is_empty() {
            Err("model_name is empty".into())
        } else {
            Ok(format!(
                "{} classes, input {:?}, model {:?}",
                info.num_classes, info.input_shape, info.model_name
            ))
        },
    ));
    if !checks[0].passed {
        return Ok(AdapterReport {
            predictor: spec.to_string(),
            model: info,
            checks,
        });
    }

    let [h, w, c] = info.input_shape;
    let zeros = ImageTensor::filled(h, w, c, 0.0)?;
    let mut gen = SeededGenerator::new(0);
    let noise = ImageTensor::new(
        h,
        w,
        c,
        (0..h * w * c).map(|_| gen.next_unit() as f32).collect(),
    )?;

    let simplex = predict(p, &zeros).and_then(|a| predict(p, &noise).map(|b| (a, b)));
    checks.push(check(
        "simplex",
        simplex
            .as_ref()
            .map(|_| "probabilities in [0, 1] summing to 1".to_string())
            .map_err(Clone::clone),
    ));
    checks.push(check(
        "shape",
        match &simplex {
            Ok((a, b))
                if a.num_classes() == info.num_classes && b.num_classes() == info.num_classes =>
            {
                Ok(format!(
                    "{:?} accepted, {} probabilities returned",
                    info.input_shape, info.num_classes
                ))
            }
            Ok((a, _)) => Err(format!(
                "declared {} classes but returned {} probabilities",
                info.num_classes,
                a.num_classes()
            )),
            Err(e) => Err(format!("no prediction for the declared shape: {e}")),
        },
    ));
    checks.push(check(
        "determinism",
        match (predict(p, &noise), &simplex) {
            (Ok(again), Ok((_, first))) if again.probs == first.probs => {
                Ok("repeat prediction identical".into())
            }
            (Ok(_), Ok(_)) => Err("the same tensor produced different probabilities".into()),
            (Err(e), _) => Err(e),
            (_, Err(e)) => Err(e.clone()),
        },
    ));
    checks.push(check(
        "batch-order",
        match (p.predict_batch(&[noise.clone(), zeros.clone()]), &simplex) {
            (Ok(batch), Ok((z, n)))
                if batch.len() == 2 && batch[0].probs == n.probs && batch[1].probs == z.probs =>
            {
                Ok("batch results match single predictions in order".into())
            }
            (Ok(_), Ok(_)) => Err("batch results differ from single predictions".into()),
            (Err(e), _) => Err(e.to_string()),
            (_, Err(e)) => Err(e.clone()),
        },
    ));

    Ok(AdapterReport {
        predictor: spec.to_string(),
        model: info,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_predictor_conforms() {
        let spec: PredictorSpec = "builtin:echo:2x2x3:0.25,0.75".parse().unwrap();
        let report = validate_adapter(&spec, &RemoteOptions::default()).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checks.len(), 5);
    }
}
