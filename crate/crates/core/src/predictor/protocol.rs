//! Wire format of the prediction protocol.
//!
//! One JSON object per message. Over stdio messages are newline-delimited;
//! over HTTP each message is the body of a `POST` to the endpoint URL.
//!
//! ```text
//! {"op":"metadata"}                                   -> {"num_classes":..,"input_shape":[H,W,C],"model_name":..}
//! {"id":7,"op":"predict","shape":[H,W,C],"data_b64":..} -> {"id":7,"probs":[..]} | {"id":7,"error":".."}
//! ```
//!
//! `data_b64` is the standard base64 encoding of the little-endian float32
//! pixel values in row-major H×W×C order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::ImageTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Metadata,
    Predict {
        id: u64,
        shape: Vec<usize>,
        data_b64: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn probs(id: u64, probs: Vec<f64>) -> Self {
        Self {
            id: Some(id),
            probs: Some(probs),
            error: None,
        }
    }

    pub fn error(id: Option<u64>, message: impl Into<String>) -> Self {
        Self {
            id,
            probs: None,
            error: Some(message.into()),
        }
    }
}

pub fn encode_image(x: &ImageTensor) -> String {
    let bytes: Vec<u8> = x.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn predict_request(id: u64, x: &ImageTensor) -> Request {
    Request::Predict {
        id,
        shape: x.shape().to_vec(),
        data_b64: encode_image(x),
    }
}

/// Rebuilds an image from a predict request's `shape` and `data_b64`.
pub fn decode_image(shape: &[usize], data_b64: &str) -> Result<ImageTensor> {
    let &[h, w, c] = shape else {
        return Err(Error::Parameter(format!(
            "shape must be [H, W, C], got {shape:?}"
        )));
    };
    let bytes = STANDARD
        .decode(data_b64)
        .map_err(|e| Error::Parameter(format!("data_b64 is not valid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Parameter(format!(
            "payload of {} bytes is not a whole number of float32 values",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::new(h, w, c, data)
}
