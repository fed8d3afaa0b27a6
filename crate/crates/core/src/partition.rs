//! Salience-ranked pixel subsets.
//!
//! Pixels are ordered by descending salience (ties by ascending flat index)
//! and cut into `k` contiguous runs `G_1..G_k`. When `HW` is not a multiple
//! of `k` the first `HW mod k` subsets receive one extra pixel.

use crate::error::{Error, Result};
use crate::tensor_io::SalienceMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPartition {
    subsets: Vec<Vec<usize>>,
    salience: Vec<f64>,
    num_pixels: usize,
}

impl SubsetPartition {
    pub fn k(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// `s(G_i)` for each subset.
    ///
    /// Non-increasing in `i` whenever the subsets have equal size or the
    /// scores are non-negative. With negative scores the extra pixel carried
    /// by the leading subsets can make a leading sum smaller.
    pub fn subset_salience(&self) -> &[f64] {
        &self.salience
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.subsets.iter().map(Vec::len).collect()
    }
}

/// Size of subset `i` (0-based) when `n` items are split into `k` runs.
pub fn subset_size(n: usize, k: usize, i: usize) -> usize {
    n / k + usize::from(i < n % k)
}

pub fn partition_by_salience(map: &SalienceMap, k: usize) -> Result<SubsetPartition> {
    let n = map.len();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!(
            "subset count k must satisfy 2 <= k <= {n} (pixels), got {k}"
        )));
    }
    let scores = map.scores();
    let mut order: Vec<usize> = (0..n).collect();
    // Scores are finite, so total_cmp agrees with numeric order except that
    // -0.0 sorts below 0.0; normalise that away so they tie.
    order.sort_by(|&a, &b| {
        (scores[b] + 0.0)
            .total_cmp(&(scores[a] + 0.0))
            .then(a.cmp(&b))
    });

    let mut subsets = Vec::with_capacity(k);
    let mut salience = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let end = start + subset_size(n, k, i);
        let members = order[start..end].to_vec();
        salience.push(members.iter().map(|&p| scores[p]).sum());
        subsets.push(members);
        start = end;
    }

    Ok(SubsetPartition {
        subsets,
        salience,
        num_pixels: n,
    })
}
