use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{write_json, DEFAULT_K};
use crate::attribution::{
    anti_oracle_attribution, oracle_attribution, random_attribution, SeededGenerator,
};
use crate::error::{Error, Result};
use crate::predictor::{LinearSoftmaxModel, Predictor};
use crate::tensor_io::{write_tensor, ImageTensor, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOptions {
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            samples: 10,
            height: 8,
            width: 8,
            channels: 3,
            classes: 2,
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

/// Writes a linear softmax model, random images, oracle, anti-oracle and
/// random maps, a dataset manifest and a run config into `dir`.
///
/// Returns the config path. With two classes the oracle map ranks subsets
/// exactly as their prediction drops do.
pub fn write_synthetic_dataset(dir: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    for sub in ["images", "maps/oracle", "maps/anti-oracle", "maps/random"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut gen = SeededGenerator::new(opts.seed);
    let len = opts.height * opts.width * opts.channels;
    let weights: Vec<Vec<f64>> = (0..opts.classes)
        .map(|_| (0..len).map(|_| 2.0 * gen.next_unit() - 1.0).collect())
        .collect();
    let model = LinearSoftmaxModel::new(
        "synthetic-linear",
        [opts.height, opts.width, opts.channels],
        weights,
        vec![0.0; opts.classes],
    )?;
    model.save(dir.join("model.json"))?;

    let mut entries = Vec::new();
    for i in 0..opts.samples {
        let id = format!("s{i:04}");
        let data = (0..len).map(|_| gen.next_unit() as f32).collect();
        let x = ImageTensor::new(opts.height, opts.width, opts.channels, data)?;
        let target = model.predict(&x)?.predicted_class;
        let maps = [
            ("oracle", oracle_attribution(&model, &x, target)?),
            ("anti-oracle", anti_oracle_attribution(&model, &x, target)?),
            (
                "random",
                random_attribution(opts.height, opts.width, &mut gen)?,
            ),
        ];
        write_tensor(&Tensor::Image(x), dir.join(format!("images/{id}.stf")))?;
        let mut salience = serde_json::Map::new();
        for (method, map) in maps {
            let rel = format!("maps/{method}/{id}.stf");
            write_tensor(&Tensor::Salience(map), dir.join(&rel))?;
            salience.insert(method.to_string(), json!(rel));
        }
        entries.push(json!({"id": id, "image": format!("images/{id}.stf"), "salience": salience}));
    }
    write_json(
        &dir.join("dataset.json"),
        &json!({"id": "synthetic", "entries": entries}),
    )?;

    let config_path = dir.join("config.json");
    write_json(
        &config_path,
        &json!({
            "dataset": "dataset.json",
            "predictor": "builtin:linear:model.json",
            "k": opts.k,
            "seed": opts.seed,
            "out_dir": "results",
        }),
    )?;
    Ok(config_path)
}
