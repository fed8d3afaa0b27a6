//! STF tensor container.
//!
//! Layout (all integers little-endian):
//! - bytes 0..4: magic `STEN`
//! - bytes 4..8: u32 header length `L`
//! - bytes 8..8+L: UTF-8 JSON `{"dtype":"f32","shape":[...],"order":"row-major"}`
//! - remainder: shape product × element size bytes of IEEE-754 floats
//!
//! Images are always written as `f32`. Salience maps are written as `f32`
//! when every score survives the narrowing exactly, otherwise as `f64`, so
//! that reading back a written tensor is always bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ImageTensor, SalienceMap, Tensor};
use crate::error::{Error, Result};

pub const STF_MAGIC: &[u8; 4] = b"STEN";
const ROW_MAJOR: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StfHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub order: String,
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|err| match err {
        DecodeError::Format(message) => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        DecodeError::Corruption(message) => Error::Corruption {
            path: path.to_path_buf(),
            message,
        },
        DecodeError::Invalid(e) => Error::Validation(format!("{}: {e}", path.display())),
    })
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(tensor)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

enum DecodeError {
    Format(String),
    Corruption(String),
    Invalid(Error),
}

fn decode(bytes: &[u8]) -> std::result::Result<Tensor, DecodeError> {
    if bytes.len() < 4 || &bytes[..4] != STF_MAGIC {
        return Err(DecodeError::Format("missing STEN magic".into()));
    }
    if bytes.len() < 8 {
        return Err(DecodeError::Corruption("truncated header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| DecodeError::Corruption("header extends past end of file".into()))?;
    let header: StfHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| DecodeError::Format(format!("bad header JSON: {e}")))?;
    if header.order != ROW_MAJOR {
        return Err(DecodeError::Format(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    if header.shape.is_empty() || header.shape.contains(&0) {
        return Err(DecodeError::Format(format!(
            "shape must have positive dimensions, got {:?}",
            header.shape
        )));
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| DecodeError::Corruption("shape product overflows".into()))?;
    let payload = &bytes[header_end..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(DecodeError::Corruption(format!(
            "shape {:?} needs {expected} payload bytes, found {}",
            header.shape,
            payload.len()
        )));
    }

    match header.shape.as_slice() {
        &[h, w, c] => {
            let data = match header.dtype {
                Dtype::F32 => decode_f32(payload),
                Dtype::F64 => decode_f64(payload).into_iter().map(|v| v as f32).collect(),
            };
            ImageTensor::new(h, w, c, data)
                .map(Tensor::Image)
                .map_err(DecodeError::Invalid)
        }
        &[h, w] => {
            let scores = match header.dtype {
                Dtype::F32 => decode_f32(payload).into_iter().map(f64::from).collect(),
                Dtype::F64 => decode_f64(payload),
            };
            SalienceMap::new(h, w, scores)
                .map(Tensor::Salience)
                .map_err(DecodeError::Invalid)
        }
        other => Err(DecodeError::Format(format!(
            "expected rank 2 or 3, got shape {other:?}"
        ))),
    }
}

fn decode_f32(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn decode_f64(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn encode(tensor: &Tensor) -> Result<Vec<u8>> {
    let (shape, dtype, payload) = match tensor {
        Tensor::Image(img) => {
            revalidate_image(img)?;
            let payload: Vec<u8> = img.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (img.shape().to_vec(), Dtype::F32, payload)
        }
        Tensor::Salience(map) => {
            SalienceMap::new(map.height(), map.width(), map.scores().to_vec())?;
            let lossless = map
                .scores()
                .iter()
                .all(|v| f64::from(*v as f32).to_bits() == v.to_bits());
            let shape = vec![map.height(), map.width()];
            if lossless {
                let payload = map
                    .scores()
                    .iter()
                    .flat_map(|v| (*v as f32).to_le_bytes())
                    .collect();
                (shape, Dtype::F32, payload)
            } else {
                let payload = map.scores().iter().flat_map(|v| v.to_le_bytes()).collect();
                (shape, Dtype::F64, payload)
            }
        }
    };
    let header = serde_json::to_vec(&StfHeader {
        dtype,
        shape,
        order: ROW_MAJOR.to_string(),
    })
    .expect("header serialization cannot fail");
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(STF_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn revalidate_image(img: &ImageTensor) -> Result<()> {
    match img.data().iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::Validation(format!(
            "image value at flat index {pos} is not finite"
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_file(header: &str, payload: &[f32]) -> Vec<u8> {
        let mut out = STF_MAGIC.to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn decodes_image_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.stf");
        let header = r#"{"dtype":"f32","shape":[2,2,1],"order":"row-major"}"#;
        fs::write(&path, raw_file(header, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        match read_tensor(&path).unwrap() {
            Tensor::Image(img) => {
                assert_eq!(img.shape(), [2, 2, 1]);
                assert_eq!(img.data(), &[1.0, 2.0, 3.0, 4.0]);
            }
            other => panic!("expected image, got {other:?}"),
        }
    }

    #[test]
    fn short_payload_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.stf");
        let header = r#"{"dtype":"f32","shape":[2,2],"order":"row-major"}"#;
        fs::write(&path, raw_file(header, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Corruption { .. })));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.stf");
        fs::write(&path, b"NOPE\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn non_finite_payload_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.stf");
        let header = r#"{"dtype":"f32","shape":[1,2],"order":"row-major"}"#;
        fs::write(&path, raw_file(header, &[1.0, f32::NAN])).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn minimal_file_size() {
        let img = ImageTensor::new(1, 1, 1, vec![0.0]).unwrap();
        let bytes = encode(&Tensor::Image(img)).unwrap();
        let header = r#"{"dtype":"f32","shape":[1,1,1],"order":"row-major"}"#;
        assert_eq!(bytes.len(), 8 + header.len() + 4);
        assert_eq!(&bytes[8..8 + header.len()], header.as_bytes());
    }

    #[test]
    fn full_resolution_payload_size() {
        let img = ImageTensor::filled(224, 224, 3, 0.5).unwrap();
        let bytes = encode(&Tensor::Image(img)).unwrap();
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 8 - header_len, 602_112);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing-dir").join("x.stf");
        let img = ImageTensor::new(1, 1, 1, vec![0.0]).unwrap();
        assert!(matches!(
            write_tensor(&Tensor::Image(img), &path),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn writing_nan_is_validation_error() {
        let mut img = ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        img.pixel_mut(1)[0] = f32::NAN;
        let dir = tempfile::tempdir().unwrap();
        let res = write_tensor(&Tensor::Image(img), dir.path().join("nan.stf"));
        assert!(matches!(res, Err(Error::Validation(_))));
    }

    #[test]
    fn salience_precision_selects_dtype() {
        let exact = SalienceMap::new(1, 2, vec![0.5, -3.0]).unwrap();
        let wide = SalienceMap::new(1, 2, vec![0.1, 1.0 / 3.0]).unwrap();
        let exact_bytes = encode(&Tensor::Salience(exact)).unwrap();
        let wide_bytes = encode(&Tensor::Salience(wide)).unwrap();
        assert!(String::from_utf8_lossy(&exact_bytes).contains(r#""dtype":"f32""#));
        assert!(String::from_utf8_lossy(&wide_bytes).contains(r#""dtype":"f64""#));
    }

    proptest! {
        #[test]
        fn image_round_trip_is_bitwise(
            (h, w, c, data) in (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(h, w, c)| {
                (Just(h), Just(w), Just(c), proptest::collection::vec(proptest::num::f32::NORMAL | proptest::num::f32::ZERO | proptest::num::f32::SUBNORMAL, h * w * c))
            })
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.stf");
            let t = Tensor::Image(ImageTensor::new(h, w, c, data).unwrap());
            write_tensor(&t, &path).unwrap();
            let back = read_tensor(&path).unwrap();
            let (Tensor::Image(a), Tensor::Image(b)) = (&t, &back) else { panic!("rank changed") };
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        #[test]
        fn salience_round_trip_is_bitwise(
            (h, w, scores) in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| {
                (Just(h), Just(w), proptest::collection::vec(-1e6f64..1e6, h * w))
            })
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.stf");
            let t = Tensor::Salience(SalienceMap::new(h, w, scores).unwrap());
            write_tensor(&t, &path).unwrap();
            let back = read_tensor(&path).unwrap();
            let (Tensor::Salience(a), Tensor::Salience(b)) = (&t, &back) else { panic!("rank changed") };
            prop_assert!(a.scores().iter().zip(b.scores()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
