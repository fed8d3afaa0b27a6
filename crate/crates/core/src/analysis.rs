//! Rank correlations between per-sample metric scores.
//!
//! Each metric scores every sample; two metrics agree when they rank the
//! samples alike. Lower-is-better metrics are negated first so that a high
//! rank always means a good explanation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores are finite; `-0.0` and `0.0` compare equal.
fn cmp_f64(a: f64, b: f64) -> Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "correlation inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Parameter(format!(
            "correlation needs at least 2 observations, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "correlation inputs must be finite".into(),
        ));
    }
    Ok(())
}

/// Number of tied pairs within runs of equal values in an already sorted
/// sequence.
fn tied_pairs<T>(sorted: &[T], mut same: impl FnMut(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort by `key` returning the number of inversions (pairs
/// that had to swap).
fn sort_counting_swaps(v: &mut [(f64, f64)], buf: &mut Vec<(f64, f64)>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp_f64(v[j].1, v[i].1) == Ordering::Less {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b with tie correction, in `O(n log n)`.
///
/// Fails with [`Error::UndefinedCorrelation`] when either input is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as u64;
    let total = n * (n - 1) / 2;

    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| cmp_f64(p.0, q.0).then(cmp_f64(p.1, q.1)));
    let ties_a = tied_pairs(&pairs, |p, q| cmp_f64(p.0, q.0) == Ordering::Equal);
    let ties_joint = tied_pairs(&pairs, |p, q| {
        cmp_f64(p.0, q.0) == Ordering::Equal && cmp_f64(p.1, q.1) == Ordering::Equal
    });

    let mut buf = Vec::with_capacity(pairs.len());
    let swaps = sort_counting_swaps(&mut pairs, &mut buf);
    let ties_b = tied_pairs(&pairs, |p, q| cmp_f64(p.1, q.1) == Ordering::Equal);

    let untied_a = total - ties_a;
    let untied_b = total - ties_b;
    if untied_a == 0 || untied_b == 0 {
        return Err(Error::UndefinedCorrelation(
            "kendall tau of a constant sequence".into(),
        ));
    }
    // concordant − discordant
    let s = (total + ties_joint) as f64 - (ties_a + ties_b) as f64 - 2.0 * swaps as f64;
    let tau = s / ((untied_a as f64) * (untied_b as f64)).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| cmp_f64(values[i], values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len()
            && cmp_f64(values[order[end]], values[order[start]]) == Ordering::Equal
        {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "spearman rho of a constant sequence".into(),
        ));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub name: String,
    pub orientation: Orientation,
    pub values: Vec<f64>,
}

/// Per-sample scores, one column per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    samples: Vec<String>,
    columns: Vec<MetricColumn>,
}

/// Name of the reference column every other metric is compared against.
pub const SACO_COLUMN: &str = "saco";

/// The five metric columns and their orientation.
pub const STANDARD_METRICS: [(&str, Orientation); 5] = [
    (SACO_COLUMN, Orientation::HigherIsBetter),
    ("auc", Orientation::LowerIsBetter),
    ("aopc", Orientation::HigherIsBetter),
    ("lodds", Orientation::LowerIsBetter),
    ("comp", Orientation::LowerIsBetter),
];

impl ScoreMatrix {
    pub fn new(samples: Vec<String>, columns: Vec<MetricColumn>) -> Result<Self> {
        for (i, col) in columns.iter().enumerate() {
            if col.values.len() != samples.len() {
                return Err(Error::Parameter(format!(
                    "column {:?} has {} values for {} samples",
                    col.name,
                    col.values.len(),
                    samples.len()
                )));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::Parameter(format!("duplicate column {:?}", col.name)));
            }
        }
        if columns
            .iter()
            .flat_map(|c| &c.values)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation(
                "score matrix cells must be finite".into(),
            ));
        }
        Ok(Self { samples, columns })
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn columns(&self) -> &[MetricColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&MetricColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Column values negated where lower is better.
    fn oriented(&self, col: &MetricColumn) -> Vec<f64> {
        match col.orientation {
            Orientation::HigherIsBetter => col.values.clone(),
            Orientation::LowerIsBetter => col.values.iter().map(|v| -v).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub metric_a: String,
    pub metric_b: String,
    /// `None` when undefined (a constant column).
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub samples: usize,
    /// SaCo against each incumbent, then every incumbent pair.
    pub pairs: Vec<PairCorrelation>,
    /// Mean over incumbent-only pairs with a defined coefficient.
    pub intra_incumbent_spearman: Option<f64>,
    pub intra_incumbent_kendall: Option<f64>,
    /// Metrics negated before ranking.
    pub sign_flipped: Vec<String>,
}

impl CorrelationReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairCorrelation> {
        self.pairs
            .iter()
            .find(|p| (p.metric_a == a && p.metric_b == b) || (p.metric_a == b && p.metric_b == a))
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn defined_or_error(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn correlation_report(scores: &ScoreMatrix) -> Result<CorrelationReport> {
    if scores.samples.len() < 2 {
        return Err(Error::Parameter(format!(
            "correlation needs at least 2 samples, got {}",
            scores.samples.len()
        )));
    }
    let reference = scores
        .column(SACO_COLUMN)
        .ok_or_else(|| Error::Parameter(format!("score matrix lacks a {SACO_COLUMN:?} column")))?;
    let incumbents: Vec<&MetricColumn> = scores
        .columns
        .iter()
        .filter(|c| c.name != SACO_COLUMN)
        .collect();

    let correlate = |a: &MetricColumn, b: &MetricColumn| -> Result<PairCorrelation> {
        let va = scores.oriented(a);
        let vb = scores.oriented(b);
        Ok(PairCorrelation {
            metric_a: a.name.clone(),
            metric_b: b.name.clone(),
            spearman: defined_or_error(spearman_rho(&va, &vb))?,
            kendall: defined_or_error(kendall_tau(&va, &vb))?,
        })
    };

    let mut pairs = Vec::new();
    for inc in &incumbents {
        pairs.push(correlate(reference, inc)?);
    }
    let mut intra = Vec::new();
    for (i, a) in incumbents.iter().enumerate() {
        for b in &incumbents[i + 1..] {
            intra.push(correlate(a, b)?);
        }
    }

    Ok(CorrelationReport {
        samples: scores.samples.len(),
        intra_incumbent_spearman: mean_defined(intra.iter().map(|p| p.spearman)),
        intra_incumbent_kendall: mean_defined(intra.iter().map(|p| p.kendall)),
        pairs: pairs.into_iter().chain(intra).collect(),
        sign_flipped: scores
            .columns
            .iter()
            .filter(|c| c.orientation == Orientation::LowerIsBetter)
            .map(|c| c.name.clone())
            .collect(),
    })
}

/// Arithmetic mean of per-group coefficients, pair by pair.
///
/// Every report must list the same metric pairs in the same order.
pub fn average_reports(reports: &[CorrelationReport]) -> Result<CorrelationReport> {
    let Some(first) = reports.first() else {
        return Err(Error::Parameter("no correlation reports to average".into()));
    };
    let same_layout = reports.iter().all(|r| {
        r.pairs.len() == first.pairs.len()
            && r.pairs
                .iter()
                .zip(&first.pairs)
                .all(|(p, q)| p.metric_a == q.metric_a && p.metric_b == q.metric_b)
    });
    if !same_layout {
        return Err(Error::Parameter(
            "reports cover different metric pairs".into(),
        ));
    }
    let pairs = first
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| PairCorrelation {
            metric_a: p.metric_a.clone(),
            metric_b: p.metric_b.clone(),
            spearman: mean_defined(reports.iter().map(|r| r.pairs[i].spearman)),
            kendall: mean_defined(reports.iter().map(|r| r.pairs[i].kendall)),
        })
        .collect();
    Ok(CorrelationReport {
        samples: reports.iter().map(|r| r.samples).sum(),
        pairs,
        intra_incumbent_spearman: mean_defined(reports.iter().map(|r| r.intra_incumbent_spearman)),
        intra_incumbent_kendall: mean_defined(reports.iter().map(|r| r.intra_incumbent_kendall)),
        sign_flipped: first.sign_flipped.clone(),
    })
}
