//! Training-time augmentation by random agent dropout, plus the corpus
//! protocols built on top of it (validation-split folding and subsampling).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{resolve_causal, CausalLabelFile, CausalSet};
use crate::perturb::{delete_agents, DEFAULT_STATIC_THRESHOLD};
use crate::scenario::{agent_displacement, AgentId, AgentTrack, Scenario};
use crate::seed::KeyHasher;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    DropContext,
    DropStaticContext,
    DropNoncausal,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 3] = [
        AugmentKind::DropContext,
        AugmentKind::DropStaticContext,
        AugmentKind::DropNoncausal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentKind::DropContext => "drop-context",
            AugmentKind::DropStaticContext => "drop-static-context",
            AugmentKind::DropNoncausal => "drop-noncausal",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub kind: AugmentKind,
    pub drop_probability: f64,
    pub static_threshold: f64,
    pub seed: u64,
}

impl AugmentConfig {
    pub fn new(kind: AugmentKind, seed: u64) -> Self {
        Self {
            kind,
            drop_probability: 0.1,
            static_threshold: DEFAULT_STATIC_THRESHOLD,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::Config(format!(
                "drop probability {} outside [0, 1]",
                self.drop_probability
            )));
        }
        if !(self.static_threshold >= 0.0) {
            return Err(Error::Config("static threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Agents the configured operator may drop. `None` means the scenario is not
/// eligible at all (drop-noncausal without labels).
pub fn eligible_agents(scenario: &Scenario, causal: Option<&CausalSet>, cfg: &AugmentConfig) -> Option<BTreeSet<AgentId>> {
    let not_av = |t: &&AgentTrack| t.agent_id != scenario.av_agent_id;
    let ids = match cfg.kind {
        AugmentKind::DropContext => scenario
            .agents
            .iter()
            .filter(not_av)
            .filter(|t| t.is_context)
            .map(|t| t.agent_id)
            .collect(),
        AugmentKind::DropStaticContext => scenario
            .agents
            .iter()
            .filter(not_av)
            .filter(|t| t.is_context)
            .filter(|t| matches!(agent_displacement(t), Ok(d) if d <= cfg.static_threshold))
            .map(|t| t.agent_id)
            .collect(),
        AugmentKind::DropNoncausal => {
            let causal = causal?;
            scenario
                .agents
                .iter()
                .filter(not_av)
                .filter(|t| !causal.contains(t.agent_id))
                .map(|t| t.agent_id)
                .collect()
        }
    };
    Some(ids)
}

/// Independent Bernoulli(p) draw keyed by (seed, scenario_id, agent_id).
fn drops(seed: u64, scenario_id: &str, id: AgentId, p: f64) -> bool {
    KeyHasher::new(seed, "augment")
        .str(scenario_id)
        .i64(id.0)
        .unit()
        < p
}

/// Drops each eligible agent independently with the configured probability.
pub fn augment_scenario(scenario: &Scenario, causal: Option<&CausalSet>, cfg: &AugmentConfig) -> Result<Scenario> {
    cfg.validate()?;
    let Some(eligible) = eligible_agents(scenario, causal, cfg) else {
        return Ok(scenario.clone());
    };
    let dropped: BTreeSet<AgentId> = eligible
        .into_iter()
        .filter(|&id| drops(cfg.seed, &scenario.scenario_id, id, cfg.drop_probability))
        .collect();
    delete_agents(scenario, &dropped)
}

/// Seeded hash of a scenario id mapped to [0, 1).
fn id_unit(seed: u64, domain: &str, scenario_id: &str) -> f64 {
    KeyHasher::new(seed, domain).str(scenario_id).unit()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldedSplit {
    /// `copies` augmented variants of every selected scenario, ids suffixed `#aug<c>`.
    pub train_addition: Vec<Scenario>,
    pub holdout: Vec<Scenario>,
    pub selected_ids: BTreeSet<String>,
}

/// Moves roughly `fraction` of a validation corpus into training: each
/// selected scenario contributes `copies` independently augmented variants,
/// the rest stays untouched as holdout.
pub fn fold_validation_split(
    corpus: &[Scenario],
    labels: Option<&CausalLabelFile>,
    fraction: f64,
    copies: usize,
    aug: &AugmentConfig,
    seed: u64,
) -> Result<FoldedSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("fold fraction {fraction} outside (0, 1)")));
    }
    aug.validate()?;
    let mut split = FoldedSplit::default();
    for scenario in corpus {
        if id_unit(seed, "fold", &scenario.scenario_id) >= fraction {
            split.holdout.push(scenario.clone());
            continue;
        }
        split.selected_ids.insert(scenario.scenario_id.clone());
        let causal = labels.and_then(|l| resolve_causal(l, scenario).ok());
        for c in 0..copies {
            let cfg = AugmentConfig {
                seed: KeyHasher::new(aug.seed, "fold-copy").u64(c as u64).finish(),
                ..*aug
            };
            let mut variant = augment_scenario(scenario, causal.as_ref(), &cfg)?;
            variant.scenario_id = format!("{}#aug{c}", scenario.scenario_id);
            split.train_addition.push(variant);
        }
    }
    Ok(split)
}

/// Ids kept by [`subsample_corpus`]: the `floor(fraction * n)` ids with the
/// smallest seeded hash, which is a uniform sample without replacement that
/// does not depend on corpus order.
pub fn subsample_ids<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    fraction: f64,
    seed: u64,
    replicate: u64,
) -> Result<BTreeSet<String>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let mut keyed: Vec<(u64, &str)> = ids
        .into_iter()
        .map(|id| {
            let k = KeyHasher::new(seed, "subsample").u64(replicate).str(id).finish();
            (k, id)
        })
        .collect();
    let keep = (fraction * keyed.len() as f64).floor() as usize;
    keyed.sort_unstable();
    Ok(keyed.into_iter().take(keep).map(|(_, id)| id.to_string()).collect())
}

/// Uniform subsample of `floor(fraction * n)` scenarios, kept in input order.
pub fn subsample_corpus(corpus: &[Scenario], fraction: f64, seed: u64, replicate: u64) -> Result<Vec<Scenario>> {
    let keep = subsample_ids(corpus.iter().map(|s| s.scenario_id.as_str()), fraction, seed, replicate)?;
    Ok(corpus
        .iter()
        .filter(|s| keep.contains(&s.scenario_id))
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::*;

    fn corpus(n: usize) -> Vec<Scenario> {
        (0..n)
            .map(|i| scenario(&format!("s{i}"), &[(1, 5.0, 5.0), (2, 6.0, 6.0)]))
            .collect()
    }

    #[test]
    fn zero_probability_is_identity() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0)]);
        for kind in [AugmentKind::DropContext, AugmentKind::DropStaticContext] {
            let cfg = AugmentConfig {
                drop_probability: 0.0,
                ..AugmentConfig::new(kind, 1)
            };
            assert_eq!(augment_scenario(&s, None, &cfg).unwrap(), s);
        }
    }

    #[test]
    fn unit_probability_drops_all_context() {
        let mut s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0), (3, 1.0, 1.0)]);
        s.agents[3].is_context = false;
        let cfg = AugmentConfig {
            drop_probability: 1.0,
            ..AugmentConfig::new(AugmentKind::DropContext, 1)
        };
        let out = augment_scenario(&s, None, &cfg).unwrap();
        let valid: Vec<i64> = out
            .agents
            .iter()
            .filter(|t| t.has_valid_state())
            .map(|t| t.agent_id.0)
            .collect();
        assert_eq!(valid, vec![0, 3]);
    }

    #[test]
    fn drop_noncausal_spares_causal_and_skips_unlabeled() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0)]);
        let cfg = AugmentConfig {
            drop_probability: 1.0,
            ..AugmentConfig::new(AugmentKind::DropNoncausal, 1)
        };
        assert_eq!(augment_scenario(&s, None, &cfg).unwrap(), s);
        let c = CausalSet::from_ids("s", [AgentId(1)]);
        let out = augment_scenario(&s, Some(&c), &cfg).unwrap();
        assert!(out.agent(AgentId(1)).unwrap().has_valid_state());
        assert!(!out.agent(AgentId(2)).unwrap().has_valid_state());
    }

    #[test]
    fn static_eligibility_is_subset_of_context() {
        let mut s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0)]);
        for (t, st) in s.agents[2].states.iter_mut().enumerate() {
            st.x += t as f64;
        }
        let all = eligible_agents(&s, None, &AugmentConfig::new(AugmentKind::DropContext, 0)).unwrap();
        let stat = eligible_agents(&s, None, &AugmentConfig::new(AugmentKind::DropStaticContext, 0)).unwrap();
        assert!(stat.is_subset(&all));
        assert_eq!(stat, BTreeSet::from([AgentId(1)]));
    }

    #[test]
    fn bad_probability_is_rejected() {
        let s = scenario("s", &[]);
        let cfg = AugmentConfig {
            drop_probability: 1.5,
            ..AugmentConfig::new(AugmentKind::DropContext, 1)
        };
        assert!(augment_scenario(&s, None, &cfg).is_err());
    }

    #[test]
    fn fold_split_partitions() {
        let c = corpus(1000);
        let aug = AugmentConfig::new(AugmentKind::DropContext, 3);
        let split = fold_validation_split(&c, None, 0.7, 2, &aug, 42).unwrap();
        let n = split.selected_ids.len();
        assert!((670..=730).contains(&n), "{n}");
        assert_eq!(split.holdout.len() + n, 1000);
        assert_eq!(split.train_addition.len(), 2 * n);
        assert!(split.holdout.iter().all(|s| !split.selected_ids.contains(&s.scenario_id)));

        let none = fold_validation_split(&c, None, 0.7, 0, &aug, 42).unwrap();
        assert!(none.train_addition.is_empty());
        assert!(fold_validation_split(&c, None, 1.0, 1, &aug, 42).is_err());
    }

    #[test]
    fn subsample_sizes_and_determinism() {
        let c = corpus(100);
        assert_eq!(subsample_corpus(&c, 1.0, 1, 1).unwrap(), c);
        let half = subsample_corpus(&c, 0.5, 1, 1).unwrap();
        assert_eq!(half.len(), 50);
        assert_eq!(half, subsample_corpus(&c, 0.5, 1, 1).unwrap());
        assert_ne!(half, subsample_corpus(&c, 0.5, 1, 2).unwrap());
        assert_eq!(subsample_corpus(&c, 0.155, 1, 1).unwrap().len(), 15);
        assert!(subsample_corpus(&c, 0.0, 1, 1).is_err());
    }
}
