use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_csv, write_json, RunManifest, SampleRecord};
use crate::analysis::{
    average_reports, correlation_report, CorrelationReport, MetricColumn, ScoreMatrix,
    STANDARD_METRICS,
};
use crate::error::{Error, Result};

/// Correlations for one (run, method) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub run: String,
    pub dataset_id: String,
    pub model_name: String,
    pub method: String,
    pub report: CorrelationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOutput {
    /// Statistic shown in the summary table; both are kept in the reports.
    pub headline_statistic: String,
    /// How group coefficients are combined into `average`.
    pub averaging: String,
    pub groups: Vec<GroupReport>,
    pub average: CorrelationReport,
}

#[derive(Debug, Serialize)]
struct CorrelationRow<'a> {
    metric_a: &'a str,
    metric_b: &'a str,
    spearman: Option<f64>,
    kendall: Option<f64>,
}

fn score_matrix(records: &[&SampleRecord]) -> Result<ScoreMatrix> {
    let samples = records.iter().map(|r| r.sample_id.clone()).collect();
    let columns = STANDARD_METRICS
        .iter()
        .map(|&(name, orientation)| MetricColumn {
            name: name.to_string(),
            orientation,
            values: records
                .iter()
                .map(|r| match name {
                    "saco" => r.f,
                    "auc" => r.auc,
                    "aopc" => r.aopc,
                    "lodds" => r.lodds,
                    _ => r.comp,
                })
                .collect(),
        })
        .collect();
    ScoreMatrix::new(samples, columns)
}

/// Rank correlations between SaCo and the other metrics for every
/// (run, method) group, averaged arithmetically across groups.
///
/// Every group must cover the same sample ids. Writes `correlation.json`
/// and `correlation.csv` (averaged table) into `out_dir`.
pub fn run_correlate(manifests: &[PathBuf], out_dir: &Path) -> Result<CorrelationOutput> {
    if manifests.is_empty() {
        return Err(Error::Parameter("no run manifests given".into()));
    }
    struct Group {
        index: usize,
        run: String,
        dataset_id: String,
        model_name: String,
        method: String,
        records: Vec<SampleRecord>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for (index, path) in manifests.iter().enumerate() {
        let manifest = RunManifest::load(path)?;
        for record in manifest.load_records(path)? {
            match groups
                .iter_mut()
                .find(|g| g.index == index && g.method == record.method)
            {
                Some(g) => g.records.push(record),
                None => groups.push(Group {
                    index,
                    run: path.display().to_string(),
                    dataset_id: manifest.dataset_id.clone(),
                    model_name: manifest.predictor.model_name.clone(),
                    method: record.method.clone(),
                    records: vec![record],
                }),
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Parameter("the given runs contain no results".into()));
    }

    let all_ids: BTreeSet<&str> = groups
        .iter()
        .flat_map(|g| g.records.iter().map(|r| r.sample_id.as_str()))
        .collect();
    let mut missing = Vec::new();
    for g in &groups {
        let have: BTreeSet<&str> = g.records.iter().map(|r| r.sample_id.as_str()).collect();
        for id in all_ids.difference(&have) {
            missing.push(format!("{id} (run {}, method {})", g.run, g.method));
        }
    }
    if !missing.is_empty() {
        return Err(Error::Alignment { missing });
    }

    let mut reports = Vec::new();
    for g in &mut groups {
        g.records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let refs: Vec<&SampleRecord> = g.records.iter().collect();
        reports.push(GroupReport {
            run: g.run.clone(),
            dataset_id: g.dataset_id.clone(),
            model_name: g.model_name.clone(),
            method: g.method.clone(),
            report: correlation_report(&score_matrix(&refs)?)?,
        });
    }
    let average = average_reports(&reports.iter().map(|g| g.report.clone()).collect::<Vec<_>>())?;

    let output = CorrelationOutput {
        headline_statistic: "spearman".into(),
        averaging: "arithmetic mean of per-(run, method) coefficients; undefined cells skipped"
            .into(),
        groups: reports,
        average,
    };
    write_json(&out_dir.join("correlation.json"), &output)?;
    let mut rows: Vec<CorrelationRow> = output
        .average
        .pairs
        .iter()
        .map(|p| CorrelationRow {
            metric_a: &p.metric_a,
            metric_b: &p.metric_b,
            spearman: p.spearman,
            kendall: p.kendall,
        })
        .collect();
    rows.push(CorrelationRow {
        metric_a: "incumbents",
        metric_b: "mean",
        spearman: output.average.intra_incumbent_spearman,
        kendall: output.average.intra_incumbent_kendall,
    });
    write_csv(&out_dir.join("correlation.csv"), &rows)?;
    Ok(output)
}

/// Plot-ready series for one evaluated map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub sample_id: String,
    pub method: String,
    pub k: usize,
    pub target_class: usize,
    /// Salience sum of each subset, highest first.
    pub subset_salience: Vec<f64>,
    /// Confidence drop when only that subset is replaced.
    pub dpred: Vec<f64>,
    pub fractions: Vec<f64>,
    pub morf_confidences: Vec<f64>,
    pub lerf_confidences: Vec<f64>,
}

/// Series for `sample_id` from the run at `manifest_path`. `method` may be
/// omitted when the sample was evaluated with a single method.
pub fn emit_curve_data(
    manifest_path: &Path,
    sample_id: &str,
    method: Option<&str>,
) -> Result<CurveData> {
    let manifest = RunManifest::load(manifest_path)?;
    let entries: Vec<_> = manifest
        .results
        .iter()
        .filter(|e| e.sample_id == sample_id && method.is_none_or(|m| m == e.method))
        .collect();
    let entry = match entries.as_slice() {
        [] => return Err(Error::UnknownSample(sample_id.to_string())),
        [one] => *one,
        many => {
            let names: Vec<&str> = many.iter().map(|e| e.method.as_str()).collect();
            return Err(Error::Parameter(format!(
                "sample {sample_id:?} was evaluated with several methods ({}); pick one",
                names.join(", ")
            )));
        }
    };
    let single = RunManifest {
        results: vec![entry.clone()],
        ..manifest
    };
    let record = single.load_records(manifest_path)?.remove(0);
    let k = record.k;
    Ok(CurveData {
        sample_id: record.sample_id,
        method: record.method,
        k,
        target_class: record.target_class,
        subset_salience: record.subset_salience,
        dpred: record.dpred,
        fractions: (0..=k).map(|t| t as f64 / k as f64).collect(),
        morf_confidences: record.morf_confidences,
        lerf_confidences: record.lerf_confidences,
    })
}
