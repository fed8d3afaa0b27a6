//! Image and salience-map containers plus their on-disk formats.
//!
//! Everything that enters the engine from the filesystem goes through this
//! module: STF tensor files, 8-bit PNG images, and JSON dataset manifests.
//! Values are validated (shape and finiteness) when they are loaded so that
//! later stages can assume well-formed inputs.

mod manifest;
mod stf;

pub use manifest::{load_manifest, DatasetManifest, ManifestEntry};
pub use stf::{read_tensor, write_tensor, Dtype, StfHeader, STF_MAGIC};

use std::path::Path;

use crate::error::{Error, Result};

/// A dense H×W×C image, row-major with channels innermost.
///
/// Pixel `(r, c, ch)` lives at flat index `(r * W + c) * C + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Validation(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "image {height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "image value at flat index {pos} is not finite ({})",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Image filled with a single value.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    /// Number of spatial positions, H·W.
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// All channel values of the pixel at flat spatial index `p`.
    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub(crate) fn pixel_mut(&mut self, p: usize) -> &mut [f32] {
        &mut self.data[p * self.channels..(p + 1) * self.channels]
    }
}

/// Per-pixel importance scores for one image, row-major H×W.
///
/// Scores carry no constraint on sign or scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceMap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
}

impl SalienceMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "salience map dimensions must be positive, got {height}x{width}"
            )));
        }
        if scores.len() != height * width {
            return Err(Error::Validation(format!(
                "salience map {height}x{width} needs {} scores, got {}",
                height * width,
                scores.len()
            )));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "salience score at flat index {pos} is not finite ({})",
                scores[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            scores,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Returns `scale * M + shift` pixel-wise.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        let scores = self.scores.iter().map(|v| scale * v + shift).collect();
        Self::new(self.height, self.width, scores)
    }

    /// Checks that the map covers the spatial grid of `image`.
    pub fn check_matches(&self, image: &ImageTensor) -> Result<()> {
        if self.height != image.height() || self.width != image.width() {
            return Err(Error::Parameter(format!(
                "salience map is {}x{} but image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }
}

/// Result of decoding an STF file: rank 3 is an image, rank 2 a salience map.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Image(ImageTensor),
    Salience(SalienceMap),
}

/// Loads an image from an STF file or an 8-bit PNG (scaled to `[0, 1]`).
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    if has_extension(path, "png") {
        return read_png(path);
    }
    match read_tensor(path)? {
        Tensor::Image(img) => Ok(img),
        Tensor::Salience(_) => Err(Error::Format {
            path: path.to_path_buf(),
            message: "expected a rank-3 image tensor, found a rank-2 salience map".into(),
        }),
    }
}

/// Loads a salience map. Rank-3 tensors with a single channel are accepted.
pub fn read_salience(path: impl AsRef<Path>) -> Result<SalienceMap> {
    let path = path.as_ref();
    match read_tensor(path)? {
        Tensor::Salience(map) => Ok(map),
        Tensor::Image(img) if img.channels() == 1 => {
            let (h, w) = (img.height(), img.width());
            let scores = img.into_data().into_iter().map(f64::from).collect();
            SalienceMap::new(h, w, scores)
        }
        Tensor::Image(img) => Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected an H×W salience map, found an image with {} channels",
                img.channels()
            ),
        }),
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read_png(path: &Path) -> Result<ImageTensor> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = if decoded.color().has_color() {
        (3, decoded.into_rgb8().into_raw())
    } else {
        (1, decoded.into_luma8().into_raw())
    };
    let data = bytes.into_iter().map(|b| f32::from(b) / 255.0).collect();
    ImageTensor::new(height, width, channels, data)
}
