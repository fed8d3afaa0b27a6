use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_file_name, write_csv, write_json, Conventions, PredictorMetadata, ResultEntry, RunConfig,
    RunManifest, SampleFailure, SampleRecord, WallClock, ENGINE_VERSION, MANIFEST_FILE,
};
use crate::attribution::{random_attribution, SeededGenerator};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_sample;
use crate::perturbation::Schedule;
use crate::predictor::{CachingPredictor, Predictor};
use crate::tensor_io::{load_manifest, read_image, read_salience, DatasetManifest, ManifestEntry};

/// What a finished run left behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

impl RunOutcome {
    pub fn has_failures(&self) -> bool {
        !self.manifest.failures.is_empty()
    }

    pub fn predictor_unreachable(&self) -> bool {
        self.manifest.failures.iter().any(|f| f.transport)
    }
}

fn load_dataset(config: &RunConfig) -> Result<DatasetManifest> {
    let dataset =
        load_manifest(&config.dataset).map_err(|e| Error::Config(format!("dataset: {e}")))?;
    for entry in &dataset.entries {
        check_file_name("sample id", &entry.id).map_err(|e| Error::Config(e.to_string()))?;
        for method in entry.methods() {
            check_file_name("method", method).map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    Ok(dataset)
}

fn connect(config: &RunConfig) -> Result<Box<dyn Predictor>> {
    let spec = config.predictor_spec()?;
    let inner = spec.connect(&config.remote.options())?;
    if config.cache {
        Ok(Box::new(CachingPredictor::new(inner)))
    } else {
        Ok(inner)
    }
}

fn check_k(config: &RunConfig, predictor: &dyn Predictor) -> Result<()> {
    let [h, w, _] = predictor.info().input_shape;
    if config.k > h * w {
        return Err(Error::Config(format!(
            "k = {} exceeds the {} pixels of the predictor's {h}x{w} input",
            config.k,
            h * w
        )));
    }
    Ok(())
}

fn predictor_metadata(config: &RunConfig, predictor: &dyn Predictor) -> PredictorMetadata {
    let info = predictor.info();
    PredictorMetadata {
        spec: config.predictor.clone(),
        model_name: info.model_name.clone(),
        num_classes: info.num_classes,
        input_shape: info.input_shape,
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

struct Job<'a> {
    entry: &'a ManifestEntry,
    method: &'a str,
    map_path: &'a Path,
}

fn run_job(job: &Job<'_>, predictor: &dyn Predictor, k: usize) -> Result<SampleRecord> {
    let x = read_image(&job.entry.image)?;
    let map = read_salience(job.map_path)?;
    let eval = evaluate_sample(&x, &map, predictor, k)?;
    Ok(SampleRecord::new(
        &job.entry.id,
        job.method,
        job.entry.label,
        &eval,
    ))
}

fn failure(sample_id: &str, method: &str, err: &Error) -> SampleFailure {
    SampleFailure {
        sample_id: sample_id.to_string(),
        method: method.to_string(),
        error: err.to_string(),
        transport: err.is_transport(),
    }
}

fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Serialize)]
struct AggregateRow<'a> {
    sample_id: &'a str,
    #[serde(rename = "F")]
    f: f64,
    violations: usize,
    auc: f64,
    aopc: f64,
    lodds: f64,
    comp: f64,
}

/// Mean and spread of one metric over a set of maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; undefined for fewer than two values.
    pub stddev: Option<f64>,
    /// `stddev / sqrt(count)`.
    pub standard_error: Option<f64>,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let stddev = match (n, mean) {
            (2.., Some(m)) => Some(
                (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt(),
            ),
            _ => None,
        };
        Self {
            count: n,
            mean,
            stddev,
            standard_error: stddev.map(|s| s / (n as f64).sqrt()),
        }
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    samples: usize,
    metric: &'a str,
    mean: Option<f64>,
    stddev: Option<f64>,
}

fn metric_columns(records: &[&SampleRecord]) -> [(&'static str, Vec<f64>); 5] {
    let col = |f: fn(&SampleRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<_>>();
    [
        ("F", col(|r| r.f)),
        ("auc", col(|r| r.auc)),
        ("aopc", col(|r| r.aopc)),
        ("lodds", col(|r| r.lodds)),
        ("comp", col(|r| r.comp)),
    ]
}

/// Evaluates every (sample, method) map of the configured dataset.
///
/// Config and dataset problems fail before any prediction is made. A
/// failing sample is logged, listed in the manifest and skipped.
pub fn run_evaluate(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let dataset = load_dataset(config)?;
    let methods: Vec<String> = match &config.methods {
        Some(m) => m.clone(),
        None => dataset.methods(),
    };
    let predictor = connect(config)?;
    check_k(config, predictor.as_ref())?;

    let mut jobs = Vec::new();
    for method in &methods {
        for entry in &dataset.entries {
            if let Some(map_path) = entry.salience_path(method) {
                jobs.push(Job {
                    entry,
                    method,
                    map_path,
                });
            }
        }
    }
    if jobs.is_empty() {
        warn!("dataset {:?} has no maps to evaluate", dataset.id);
    }
    info!(
        "evaluating {} maps with {} workers, k = {}",
        jobs.len(),
        config.workers,
        config.k
    );

    let pool = thread_pool(config.workers)?;
    let outcomes: Vec<Result<SampleRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, predictor.as_ref(), config.k))
            .collect()
    });

    // Single writer, in job order.
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut records: Vec<SampleRecord> = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(record) => {
                let rel = format!("samples/{}/{}.json", job.method, job.entry.id);
                write_json(&config.out_dir.join(&rel), &record)?;
                results.push(ResultEntry {
                    sample_id: job.entry.id.clone(),
                    method: job.method.to_string(),
                    path: rel,
                });
                records.push(record);
            }
            Err(e) => {
                warn!("sample {:?} ({}) failed: {e}", job.entry.id, job.method);
                failures.push(failure(&job.entry.id, job.method, &e));
            }
        }
    }

    let mut summary = Vec::new();
    for method in &methods {
        let of_method: Vec<&SampleRecord> =
            records.iter().filter(|r| &r.method == method).collect();
        if of_method.is_empty() {
            continue;
        }
        let rows: Vec<AggregateRow> = of_method
            .iter()
            .map(|r| AggregateRow {
                sample_id: &r.sample_id,
                f: r.f,
                violations: r.violations,
                auc: r.auc,
                aopc: r.aopc,
                lodds: r.lodds,
                comp: r.comp,
            })
            .collect();
        write_csv(
            &config.out_dir.join(format!("aggregate/{method}.csv")),
            &rows,
        )?;
        for (metric, values) in metric_columns(&of_method) {
            let s = MetricSummary::of(&values);
            summary.push((method.as_str(), of_method.len(), metric, s));
        }
    }
    let summary_rows: Vec<SummaryRow> = summary
        .iter()
        .map(|(method, samples, metric, s)| SummaryRow {
            method,
            samples: *samples,
            metric,
            mean: s.mean,
            stddev: s.stddev,
        })
        .collect();
    write_csv(&config.out_dir.join("summary.csv"), &summary_rows)?;

    let manifest = RunManifest {
        engine_version: ENGINE_VERSION.to_string(),
        config: config.clone(),
        config_digest: config.digest(),
        dataset_id: dataset.id.clone(),
        predictor: predictor_metadata(config, predictor.as_ref()),
        k: config.k,
        schedules: vec![
            Schedule::Individual,
            Schedule::CumulativeMorf,
            Schedule::CumulativeLerf,
        ],
        seed: config.seed,
        results,
        failures,
        conventions: Conventions::current(),
        wall_clock: WallClock {
            started_unix_ms: unix_ms(started),
            elapsed_ms: clock.elapsed().as_millis() as u64,
        },
    };
    let manifest_path = config.out_dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;
    Ok(RunOutcome {
        manifest,
        manifest_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaselineSummary {
    pub dataset_id: String,
    pub model_name: String,
    pub k: usize,
    pub seed: u64,
    pub maps_per_sample: usize,
    pub samples: usize,
    #[serde(rename = "F")]
    pub f: MetricSummary,
    pub auc: MetricSummary,
    pub aopc: MetricSummary,
    pub lodds: MetricSummary,
    pub comp: MetricSummary,
    pub failures: Vec<SampleFailure>,
    pub conventions: Conventions,
}

#[derive(Debug, Serialize)]
struct RandomRow<'a> {
    sample_id: &'a str,
    draw: usize,
    seed: u64,
    #[serde(rename = "F")]
    f: f64,
    auc: f64,
    aopc: f64,
    lodds: f64,
    comp: f64,
}

/// Scores `n` uniform random maps per dataset image.
///
/// Map `r` of sample `i` is drawn from the stream seeded with
/// `seed ^ (i * n + r)`. Writes `random_baseline.csv` (one row per map) and
/// `random_summary.json`.
pub fn run_random_baseline(config: &RunConfig, n: usize) -> Result<RandomBaselineSummary> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Config(
            "random baseline needs at least one map per sample".into(),
        ));
    }
    let dataset = load_dataset(config)?;
    let predictor = connect(config)?;
    check_k(config, predictor.as_ref())?;
    let pool = thread_pool(config.workers)?;

    type Draws = Vec<(u64, SampleRecord)>;
    let per_sample: Vec<Result<Draws>> = pool.install(|| {
        dataset
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let x = read_image(&entry.image)?;
                (0..n)
                    .into_par_iter()
                    .map(|r| {
                        let mut gen = SeededGenerator::for_sample(config.seed, (i * n + r) as u64);
                        let map = random_attribution(x.height(), x.width(), &mut gen)?;
                        let eval = evaluate_sample(&x, &map, predictor.as_ref(), config.k)?;
                        Ok((
                            gen.seed(),
                            SampleRecord::new(&entry.id, "random", entry.label, &eval),
                        ))
                    })
                    .collect()
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut samples = 0;
    for (entry, outcome) in dataset.entries.iter().zip(&per_sample) {
        match outcome {
            Ok(draws) => {
                samples += 1;
                for (r, (seed, rec)) in draws.iter().enumerate() {
                    rows.push(RandomRow {
                        sample_id: &entry.id,
                        draw: r,
                        seed: *seed,
                        f: rec.f,
                        auc: rec.auc,
                        aopc: rec.aopc,
                        lodds: rec.lodds,
                        comp: rec.comp,
                    });
                    records.push(rec);
                }
            }
            Err(e) => {
                warn!("sample {:?} failed: {e}", entry.id);
                failures.push(failure(&entry.id, "random", e));
            }
        }
    }
    write_csv(&config.out_dir.join("random_baseline.csv"), &rows)?;

    let [f, auc, aopc, lodds, comp] = metric_columns(&records).map(|(_, v)| MetricSummary::of(&v));
    let summary = RandomBaselineSummary {
        dataset_id: dataset.id.clone(),
        model_name: predictor.info().model_name.clone(),
        k: config.k,
        seed: config.seed,
        maps_per_sample: n,
        samples,
        f,
        auc,
        aopc,
        lodds,
        comp,
        failures,
        conventions: Conventions::current(),
    };
    write_json(&config.out_dir.join("random_summary.json"), &summary)?;
    Ok(summary)
}
