use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{summarize, PerExampleRecord, Summary};
use crate::error::{Error, Result};

/// 5 mph in m/s.
const FIVE_MPH: f64 = 2.235;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceDimension {
    AvSpeed,
    RemovedFraction,
    MinRemovedDistance,
}

impl SliceDimension {
    pub const ALL: [SliceDimension; 3] = [
        SliceDimension::AvSpeed,
        SliceDimension::RemovedFraction,
        SliceDimension::MinRemovedDistance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SliceDimension::AvSpeed => "av_speed",
            SliceDimension::RemovedFraction => "removed_fraction",
            SliceDimension::MinRemovedDistance => "min_removed_distance",
        }
    }

    pub fn value(&self, r: &PerExampleRecord) -> Option<f64> {
        match self {
            SliceDimension::AvSpeed => Some(r.av_speed),
            SliceDimension::RemovedFraction => Some(r.removed_fraction_of_context),
            SliceDimension::MinRemovedDistance => r.min_removed_distance,
        }
    }

    pub fn default_edges(&self) -> Vec<f64> {
        match self {
            // 0 to 75 mph in 5 mph steps
            SliceDimension::AvSpeed => (0..=15).map(|i| i as f64 * FIVE_MPH).collect(),
            SliceDimension::RemovedFraction => (0..=10).map(|i| i as f64 / 10.0).collect(),
            SliceDimension::MinRemovedDistance => (0..=10).map(|i| i as f64 * 10.0).collect(),
        }
    }
}

impl fmt::Display for SliceDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SliceDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown slice dimension `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub dimension: SliceDimension,
    pub bin_edges: Vec<f64>,
}

impl SliceSpec {
    pub fn new(dimension: SliceDimension, bin_edges: Vec<f64>) -> Result<Self> {
        if bin_edges.len() < 2 {
            return Err(Error::Config("slicing needs at least 2 bin edges".into()));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("bin edges must be finite and strictly increasing".into()));
        }
        Ok(Self { dimension, bin_edges })
    }

    pub fn with_default_edges(dimension: SliceDimension) -> Self {
        Self {
            dimension,
            bin_edges: dimension.default_edges(),
        }
    }

    /// Bin index for a value: bins are `[e_i, e_{i+1})` except the last, which
    /// also includes its upper edge. Values outside the edges get `None`.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        let e = &self.bin_edges;
        let last = e.len() - 2;
        if v.is_nan() || v < e[0] || v > e[last + 1] {
            return None;
        }
        Some(e.partition_point(|&edge| edge <= v).saturating_sub(1).min(last))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub summary: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub dimension: SliceDimension,
    pub bins: Vec<SliceBin>,
    /// Records whose covariate is missing or outside the bin edges.
    pub na_count: usize,
    pub na_summary: Option<Summary>,
}

impl SliceReport {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.na_count
    }
}

pub fn slice(records: &[PerExampleRecord], spec: &SliceSpec) -> Result<SliceReport> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let spec = SliceSpec::new(spec.dimension, spec.bin_edges.clone())?;
    let nbins = spec.bin_edges.len() - 1;
    let mut members: Vec<Vec<PerExampleRecord>> = vec![Vec::new(); nbins];
    let mut na = Vec::new();
    for r in records {
        match spec.dimension.value(r).and_then(|v| spec.bin_of(v)) {
            Some(b) => members[b].push(r.clone()),
            None => na.push(r.clone()),
        }
    }
    let summary = |rs: &[PerExampleRecord]| if rs.is_empty() { Ok(None) } else { summarize(rs).map(Some) };
    let bins = members
        .iter()
        .enumerate()
        .map(|(i, rs)| {
            Ok(SliceBin {
                lo: spec.bin_edges[i],
                hi: spec.bin_edges[i + 1],
                count: rs.len(),
                summary: summary(rs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceReport {
        dimension: spec.dimension,
        bins,
        na_count: na.len(),
        na_summary: summary(&na)?,
    })
}
