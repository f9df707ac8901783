//! Joint original-vs-perturbed evaluation and the summaries built on it.

mod export;
mod slice;
mod stats;

pub use export::{
    format_sig6, read_records_csv, write_agreement_csv, write_records_csv, write_slices_csv,
    write_stats_csv, write_summary_csv, RECORDS_HEADER, SLICES_HEADER, SUMMARY_HEADER,
};
pub use slice::{slice, SliceBin, SliceDimension, SliceReport, SliceSpec};
pub use stats::{causal_stats, CausalStats, CausalStatsAccumulator};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{abs_delta, min_ade, min_fde, trajectory_set_iou, ts_min_ade, AbsDeltaSummary, MetricConfig};
use crate::perturb::Covariates;
use crate::scenario::{PredictionSet, Scenario, Trajectory, CURRENT_INDEX, NUM_STEPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerExampleRecord {
    pub scenario_id: String,
    pub original_min_ade: f64,
    pub perturbed_min_ade: f64,
    pub original_min_fde: f64,
    pub perturbed_min_fde: f64,
    pub iou: f64,
    pub ts_min_ade: f64,
    pub av_speed: f64,
    pub removed_fraction_of_context: f64,
    pub min_removed_distance: Option<f64>,
    pub num_removed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedScenario {
    pub scenario_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub records: Vec<PerExampleRecord>,
    pub skipped: Vec<SkippedScenario>,
}

/// AV future (steps after the current one) as a trajectory; every future step
/// must be valid.
pub fn ground_truth(scenario: &Scenario) -> Result<Trajectory> {
    let av = scenario.av()?;
    let future = &av.states[CURRENT_INDEX + 1..NUM_STEPS];
    if let Some(i) = future.iter().position(|s| !s.valid) {
        return Err(Error::invalid(
            &scenario.scenario_id,
            format!("AV future step {} is invalid", CURRENT_INDEX + 1 + i),
        ));
    }
    Ok(Trajectory::new(future.iter().map(|s| s.xy()).collect()))
}

pub fn evaluate_one(
    scenario: &Scenario,
    original: &PredictionSet,
    perturbed: &PredictionSet,
    covariates: &Covariates,
    cfg: &MetricConfig,
) -> Result<PerExampleRecord> {
    let gt = ground_truth(scenario)?;
    Ok(PerExampleRecord {
        scenario_id: scenario.scenario_id.clone(),
        original_min_ade: min_ade(&gt, original, cfg)?,
        perturbed_min_ade: min_ade(&gt, perturbed, cfg)?,
        original_min_fde: min_fde(&gt, original, cfg)?,
        perturbed_min_fde: min_fde(&gt, perturbed, cfg)?,
        iou: trajectory_set_iou(original, perturbed, cfg)?,
        ts_min_ade: ts_min_ade(original, perturbed)?,
        av_speed: scenario.av_current()?.speed(),
        removed_fraction_of_context: covariates.removed_fraction_of_context,
        min_removed_distance: covariates.min_removed_distance,
        num_removed: covariates.removed_ids.len(),
    })
}

/// Evaluates every scenario against both prediction variants. Scenarios
/// lacking a prediction, covariates or a fully valid AV future are reported in
/// `skipped`; record order follows corpus order.
pub fn joint_evaluate(
    corpus: &[Scenario],
    original: &HashMap<String, PredictionSet>,
    perturbed: &HashMap<String, PredictionSet>,
    covariates: &HashMap<String, Covariates>,
    cfg: &MetricConfig,
) -> Evaluation {
    let results: Vec<std::result::Result<PerExampleRecord, SkippedScenario>> = corpus
        .par_iter()
        .map(|s| {
            let id = &s.scenario_id;
            let skip = |reason: String| SkippedScenario {
                scenario_id: id.clone(),
                reason,
            };
            let o = original.get(id).ok_or_else(|| skip("missing original prediction".into()))?;
            let p = perturbed.get(id).ok_or_else(|| skip("missing perturbed prediction".into()))?;
            let c = covariates.get(id).ok_or_else(|| skip("missing covariates".into()))?;
            evaluate_one(s, o, p, c, cfg).map_err(|e| skip(e.to_string()))
        })
        .collect();

    let mut out = Evaluation::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(skip) => {
                tracing::warn!(scenario_id = %skip.scenario_id, reason = %skip.reason, "skipping scenario");
                out.skipped.push(skip);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min_ade: AbsDeltaSummary,
    pub min_fde: AbsDeltaSummary,
    pub mean_iou: f64,
    pub mean_ts_min_ade: f64,
}

pub fn summarize(records: &[PerExampleRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let pairs = |f: fn(&PerExampleRecord) -> (f64, f64)| records.iter().map(f).collect::<Vec<_>>();
    let n = records.len() as f64;
    Ok(Summary {
        min_ade: abs_delta(&pairs(|r| (r.original_min_ade, r.perturbed_min_ade)))?,
        min_fde: abs_delta(&pairs(|r| (r.original_min_fde, r.perturbed_min_fde)))?,
        mean_iou: records.iter().map(|r| r.iou).sum::<f64>() / n,
        mean_ts_min_ade: records.iter().map(|r| r.ts_min_ade).sum::<f64>() / n,
    })
}
