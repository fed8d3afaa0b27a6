//! Batch runs over a dataset manifest and the files they leave behind.
//!
//! An evaluation run writes, under its output directory:
//!
//! - `samples/<method>/<sample id>.json`: one [`SampleRecord`] per map
//! - `aggregate/<method>.csv`: one row per sample
//! - `summary.csv`: per-method means and standard deviations
//! - `run_manifest.json`: the [`RunManifest`]

mod adapter;
mod config;
mod evaluate;
mod report;
mod synth;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::SampleEvaluation;
use crate::metrics::LODDS_EPSILON;
use crate::perturbation::Schedule;

pub use adapter::{validate_adapter, AdapterCheck, AdapterReport};
pub use config::{
    config_schema, Overrides, RemoteConfig, RunConfig, DEFAULT_K, DEFAULT_OUT_DIR, K_SWEEP,
};
pub use evaluate::{
    run_evaluate, run_random_baseline, MetricSummary, RandomBaselineSummary, RunOutcome,
};
pub use report::{emit_curve_data, run_correlate, CorrelationOutput, CurveData, GroupReport};
pub use synth::{write_synthetic_dataset, SynthOptions};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The choices that make a number reproducible, stored next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub baseline: String,
    pub target_class: String,
    pub subset_order: String,
    pub delta_ties: String,
    pub curve_fractions: String,
    pub auc: String,
    pub aopc_steps: String,
    pub lodds: String,
    pub lodds_epsilon: f64,
    pub comp: String,
    pub orientation: String,
}

impl Conventions {
    pub fn current() -> Self {
        Self {
            baseline: "per-sample per-channel mean".into(),
            target_class: "argmax of the unperturbed prediction, lowest index on ties".into(),
            subset_order: "salience descending, ties by ascending pixel index; first HW mod K subsets hold one extra pixel".into(),
            delta_ties: "equal prediction drops count as agreeing".into(),
            curve_fractions: "t/K for t = 0..=K".into(),
            auc: "trapezoid over the MoRF confidence curve".into(),
            aopc_steps: "mean of c0 - ct over t = 0..=K (MoRF)".into(),
            lodds: "mean of ln((ct + eps) / (c0 + eps)) over t = 1..=K (MoRF)".into(),
            lodds_epsilon: LODDS_EPSILON,
            comp: "mean of c0 - ct over t = 1..=K (LeRF)".into(),
            orientation: "higher is better: F, aopc; lower is better: auc, lodds, comp".into(),
        }
    }
}

/// Everything measured for one (sample, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub method: String,
    pub label: Option<i64>,
    pub k: usize,
    pub target_class: usize,
    pub base_confidence: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub violations: usize,
    pub pairs: usize,
    pub total_weight: f64,
    pub auc: f64,
    pub aopc: f64,
    pub lodds: f64,
    pub comp: f64,
    pub subset_salience: Vec<f64>,
    pub dpred: Vec<f64>,
    pub morf_confidences: Vec<f64>,
    pub lerf_confidences: Vec<f64>,
    pub morf_correct: Vec<bool>,
    pub lerf_correct: Vec<bool>,
    pub conventions: Conventions,
}

impl SampleRecord {
    pub fn new(sample_id: &str, method: &str, label: Option<i64>, eval: &SampleEvaluation) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            method: method.to_string(),
            label,
            k: eval.measurements.k(),
            target_class: eval.target_class,
            base_confidence: eval.base.confidence,
            f: eval.saco.f,
            violations: eval.saco.violations,
            pairs: eval.saco.pairs,
            total_weight: eval.saco.total_weight,
            auc: eval.scores.auc,
            aopc: eval.scores.aopc,
            lodds: eval.scores.lodds,
            comp: eval.scores.comp,
            subset_salience: eval.measurements.salience().to_vec(),
            dpred: eval.measurements.dpred().to_vec(),
            morf_confidences: eval.morf.confidences.clone(),
            lerf_confidences: eval.lerf.confidences.clone(),
            morf_correct: eval.morf.correct.clone(),
            lerf_correct: eval.lerf.correct.clone(),
            conventions: Conventions::current(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetadata {
    pub spec: String,
    pub model_name: String,
    pub num_classes: usize,
    pub input_shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub sample_id: String,
    pub method: String,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub method: String,
    pub error: String,
    /// The predictor could not be reached.
    pub transport: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_ms: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub dataset_id: String,
    pub predictor: PredictorMetadata,
    pub k: usize,
    pub schedules: Vec<Schedule>,
    pub seed: u64,
    pub results: Vec<ResultEntry>,
    pub failures: Vec<SampleFailure>,
    pub conventions: Conventions,
    pub wall_clock: WallClock,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if manifest.config.digest() != manifest.config_digest {
            return Err(Error::Schema(format!(
                "{}: config digest does not match the stored config",
                path.display()
            )));
        }
        Ok(manifest)
    }

    /// Reads every result file listed in the manifest at `path`.
    pub fn load_records(&self, path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
        let base = path.as_ref().parent().unwrap_or(Path::new(""));
        self.results
            .iter()
            .map(|entry| {
                let p = base.join(&entry.path);
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Schema(format!("{}: {e}", p.display())))
            })
            .collect()
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).expect("result types serialise");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One CSV row per item, with a header taken from the field names.
pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ids and method names become file names, so keep them to one path
/// component.
pub(crate) fn check_file_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\', '\0'])
        && name.chars().all(|c| !c.is_control());
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!(
            "{kind} {name:?} cannot be used as a file name"
        )))
    }
}
