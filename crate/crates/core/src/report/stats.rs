use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{resolve_causal, CausalLabelFile, CausalSet};
use crate::perturb::distance_to_av;
use crate::scenario::{AgentType, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalStats {
    pub n_scenes: usize,
    pub mean_causal_fraction: f64,
    pub frac_scenes_below_30pct: f64,
    /// Pooled over causal agents; `None` when there are none.
    pub mean_causal_distance: Option<f64>,
    /// Pooled over all non-AV agents.
    pub mean_all_distance: Option<f64>,
    /// Pooled share of agents of each type that are causal.
    pub causal_likelihood: BTreeMap<AgentType, f64>,
}

/// Streaming accumulator behind [`causal_stats`].
#[derive(Clone, Debug, Default)]
pub struct CausalStatsAccumulator {
    scenes: usize,
    fraction_sum: f64,
    below_30: usize,
    causal_distance: (f64, usize),
    all_distance: (f64, usize),
    per_type: BTreeMap<AgentType, (usize, usize)>,
}

impl CausalStatsAccumulator {
    /// Adds one scene. Agents without any valid state are ignored; scenes with
    /// no remaining non-AV agents do not contribute a fraction.
    pub fn add(&mut self, scenario: &Scenario, causal: &CausalSet) {
        let mut total = 0usize;
        let mut n_causal = 0usize;
        for track in scenario
            .agents
            .iter()
            .filter(|t| t.agent_id != scenario.av_agent_id && t.has_valid_state())
        {
            let is_causal = causal.contains(track.agent_id);
            total += 1;
            n_causal += is_causal as usize;
            let entry = self.per_type.entry(track.agent_type).or_default();
            entry.0 += is_causal as usize;
            entry.1 += 1;
            if let Some(d) = distance_to_av(scenario, track.agent_id) {
                self.all_distance.0 += d;
                self.all_distance.1 += 1;
                if is_causal {
                    self.causal_distance.0 += d;
                    self.causal_distance.1 += 1;
                }
            }
        }
        if total > 0 {
            let fraction = n_causal as f64 / total as f64;
            self.scenes += 1;
            self.fraction_sum += fraction;
            self.below_30 += (fraction < 0.3) as usize;
        }
    }

    pub fn finish(&self) -> Result<CausalStats> {
        if self.scenes == 0 {
            return Err(Error::Empty("labeled scenarios"));
        }
        let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
        Ok(CausalStats {
            n_scenes: self.scenes,
            mean_causal_fraction: self.fraction_sum / self.scenes as f64,
            frac_scenes_below_30pct: self.below_30 as f64 / self.scenes as f64,
            mean_causal_distance: mean(self.causal_distance),
            mean_all_distance: mean(self.all_distance),
            causal_likelihood: self
                .per_type
                .iter()
                .map(|(t, &(c, n))| (*t, c as f64 / n as f64))
                .collect(),
        })
    }
}

/// Causal-agent frequency, distance and type statistics over the labeled
/// scenarios of a corpus.
pub fn causal_stats<'a>(
    corpus: impl IntoIterator<Item = &'a Scenario>,
    labels: &CausalLabelFile,
) -> Result<CausalStats> {
    let mut acc = CausalStatsAccumulator::default();
    for scenario in corpus {
        if let Ok(set) = resolve_causal(labels, scenario) {
            acc.add(scenario, &set);
        }
    }
    acc.finish()
}
