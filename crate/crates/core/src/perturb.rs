//! Agent-deletion perturbations.
//!
//! Deleting an agent keeps its track in place with every state marked invalid,
//! so agent indices stay stable and downstream consumers see the usual
//! validity-mask semantics.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IteratorRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::CausalSet;
use crate::scenario::{agent_displacement, AgentId, AgentState, Scenario, CURRENT_INDEX};
use crate::seed::KeyHasher;

pub const DEFAULT_STATIC_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    RemoveCausal,
    RemoveNoncausal,
    RemoveNoncausalEqual,
    RemoveStatic,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::RemoveCausal,
        PerturbationKind::RemoveNoncausal,
        PerturbationKind::RemoveNoncausalEqual,
        PerturbationKind::RemoveStatic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::RemoveCausal => "remove-causal",
            PerturbationKind::RemoveNoncausal => "remove-noncausal",
            PerturbationKind::RemoveNoncausalEqual => "remove-noncausal-equal",
            PerturbationKind::RemoveStatic => "remove-static",
        }
    }

    pub fn needs_labels(&self) -> bool {
        !matches!(self, PerturbationKind::RemoveStatic)
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown perturbation kind `{s}`")))
    }
}

/// Slicing covariates for one perturbed scenario; serialized as the sidecar
/// covariate file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub scenario_id: String,
    pub kind: PerturbationKind,
    pub removed_ids: BTreeSet<AgentId>,
    /// Removed agents that are labeled causal; `None` when the scenario has no labels.
    pub num_causal: Option<usize>,
    /// Removed agents that are not labeled causal; `None` when the scenario has no labels.
    pub num_noncausal: Option<usize>,
    pub min_removed_distance: Option<f64>,
    pub removed_fraction_of_context: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationOutcome {
    pub perturbed: Scenario,
    pub covariates: Covariates,
}

impl PerturbationOutcome {
    pub fn removed_ids(&self) -> &BTreeSet<AgentId> {
        &self.covariates.removed_ids
    }
}

/// Marks every state of the listed agents invalid. Unknown ids are ignored.
pub fn delete_agents(scenario: &Scenario, ids: &BTreeSet<AgentId>) -> Result<Scenario> {
    if ids.contains(&scenario.av_agent_id) {
        return Err(Error::DeleteAv {
            scenario_id: scenario.scenario_id.clone(),
            av_agent_id: scenario.av_agent_id,
        });
    }
    let mut out = scenario.clone();
    for track in out.agents.iter_mut().filter(|t| ids.contains(&t.agent_id)) {
        track.states.fill(AgentState::INVALID);
    }
    Ok(out)
}

/// Non-AV agents whose maximum positional displacement is at most `threshold`.
/// Agents with no valid state are already deleted and never selected.
pub fn select_static(scenario: &Scenario, threshold: f64) -> BTreeSet<AgentId> {
    scenario
        .agents
        .iter()
        .filter(|t| t.agent_id != scenario.av_agent_id)
        .filter(|t| matches!(agent_displacement(t), Ok(d) if d <= threshold))
        .map(|t| t.agent_id)
        .collect()
}

/// 2D distance from the AV at the current step to the agent's state nearest
/// the current step.
pub fn distance_to_av(scenario: &Scenario, id: AgentId) -> Option<f64> {
    let av = scenario.av_current().ok()?;
    let s = scenario.agent(id)?.nearest_valid(CURRENT_INDEX)?;
    Some((s.x - av.x).hypot(s.y - av.y))
}

fn noncausal_ids(scenario: &Scenario, causal: &CausalSet) -> BTreeSet<AgentId> {
    scenario
        .non_av_ids()
        .into_iter()
        .filter(|id| !causal.contains(*id))
        .collect()
}

fn causal_ids(scenario: &Scenario, causal: &CausalSet) -> BTreeSet<AgentId> {
    scenario
        .non_av_ids()
        .into_iter()
        .filter(|id| causal.contains(*id))
        .collect()
}

/// Uniform sample without replacement of `n` ids, seeded by (seed, scenario_id).
fn sample_ids(ids: &BTreeSet<AgentId>, n: usize, seed: u64, scenario_id: &str) -> BTreeSet<AgentId> {
    let mut rng = KeyHasher::new(seed, "remove-noncausal-equal")
        .str(scenario_id)
        .rng();
    ids.iter().copied().choose_multiple(&mut rng, n).into_iter().collect()
}

pub fn select_for(
    kind: PerturbationKind,
    scenario: &Scenario,
    causal: Option<&CausalSet>,
    seed: u64,
) -> Result<BTreeSet<AgentId>> {
    let labels = || causal.ok_or_else(|| Error::UnlabeledScenario(scenario.scenario_id.clone()));
    Ok(match kind {
        PerturbationKind::RemoveCausal => causal_ids(scenario, labels()?),
        PerturbationKind::RemoveNoncausal => noncausal_ids(scenario, labels()?),
        PerturbationKind::RemoveNoncausalEqual => {
            let causal = labels()?;
            let noncausal = noncausal_ids(scenario, causal);
            let n = causal_ids(scenario, causal).len().min(noncausal.len());
            sample_ids(&noncausal, n, seed, &scenario.scenario_id)
        }
        PerturbationKind::RemoveStatic => select_static(scenario, DEFAULT_STATIC_THRESHOLD),
    })
}

/// Applies one perturbation. `causal` should already be restricted to the
/// scenario (see [`crate::labels::resolve_causal`]); the AV is excluded
/// regardless.
pub fn apply(
    kind: PerturbationKind,
    scenario: &Scenario,
    causal: Option<&CausalSet>,
    seed: u64,
) -> Result<PerturbationOutcome> {
    let removed = select_for(kind, scenario, causal, seed)?;
    let perturbed = delete_agents(scenario, &removed)?;

    let (num_causal, num_noncausal) = match causal {
        Some(c) => {
            let n = removed.iter().filter(|id| c.contains(**id)).count();
            (Some(n), Some(removed.len() - n))
        }
        None => (None, None),
    };
    let min_removed_distance = removed
        .iter()
        .filter_map(|&id| distance_to_av(scenario, id))
        .min_by(f64::total_cmp);
    let context = scenario.non_av_ids().len();
    let removed_fraction_of_context = if context == 0 {
        0.0
    } else {
        removed.len() as f64 / context as f64
    };

    Ok(PerturbationOutcome {
        perturbed,
        covariates: Covariates {
            scenario_id: scenario.scenario_id.clone(),
            kind,
            removed_ids: removed,
            num_causal,
            num_noncausal,
            min_removed_distance,
            removed_fraction_of_context,
        },
    })
}

/// Checkable proxy for a non-causal perturbation: nothing causal was removed
/// and the AV track is untouched.
pub fn is_noncausal_perturbation_certificate(
    scenario: &Scenario,
    outcome: &PerturbationOutcome,
    causal: &CausalSet,
) -> bool {
    let av_kept = !outcome.removed_ids().contains(&scenario.av_agent_id)
        && match (scenario.av(), outcome.perturbed.av()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
    av_kept && outcome.removed_ids().iter().all(|id| !causal.contains(*id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::*;

    fn set(v: &[i64]) -> BTreeSet<AgentId> {
        v.iter().map(|&i| AgentId(i)).collect()
    }

    #[test]
    fn delete_nothing_is_identity() {
        let s = scenario("s", &[(1, 5.0, 5.0)]);
        assert_eq!(delete_agents(&s, &BTreeSet::new()).unwrap(), s);
    }

    #[test]
    fn delete_all_leaves_only_av() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 3.0, 1.0)]);
        let d = delete_agents(&s, &s.non_av_ids()).unwrap();
        for t in &d.agents {
            assert_eq!(t.has_valid_state(), t.agent_id == s.av_agent_id);
        }
        assert_eq!(d.agents.len(), s.agents.len());
    }

    #[test]
    fn deleting_av_is_an_error() {
        let s = scenario("s", &[(1, 5.0, 5.0)]);
        assert!(matches!(delete_agents(&s, &set(&[0])), Err(Error::DeleteAv { .. })));
    }

    #[test]
    fn static_selection() {
        let mut s = scenario("s", &[(1, 5.0, 5.0), (2, 20.0, 4.0)]);
        // parked car jittering by 0.05 m
        s.agents[1].states[30].x += 0.05;
        // car moving 10 m
        for (t, st) in s.agents[2].states.iter_mut().enumerate() {
            st.x += t as f64 * 10.0 / 90.0;
        }
        assert_eq!(select_static(&s, 0.1), set(&[1]));
    }

    #[test]
    fn causal_and_noncausal_are_complements() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0), (3, 7.0, 7.0)]);
        let c = CausalSet::from_ids("s", [AgentId(1)]);
        let rc = apply(PerturbationKind::RemoveCausal, &s, Some(&c), 0).unwrap();
        let rn = apply(PerturbationKind::RemoveNoncausal, &s, Some(&c), 0).unwrap();
        assert_eq!(rc.removed_ids(), &set(&[1]));
        assert_eq!(rn.removed_ids(), &set(&[2, 3]));
        assert_eq!(rc.covariates.num_causal, Some(1));
        assert_eq!(rn.covariates.num_noncausal, Some(2));
        assert!((rn.covariates.removed_fraction_of_context - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_removal_is_reproducible() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0), (3, 7.0, 7.0)]);
        let c = CausalSet::from_ids("s", [AgentId(1)]);
        let a = apply(PerturbationKind::RemoveNoncausalEqual, &s, Some(&c), 11).unwrap();
        let b = apply(PerturbationKind::RemoveNoncausalEqual, &s, Some(&c), 11).unwrap();
        assert_eq!(a.removed_ids().len(), 1);
        assert_eq!(a, b);
        assert!(!a.removed_ids().contains(&AgentId(1)));
    }

    #[test]
    fn equal_removal_with_few_noncausal_removes_all_of_them() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0), (3, 7.0, 7.0)]);
        let c = CausalSet::from_ids("s", [AgentId(1), AgentId(2)]);
        let out = apply(PerturbationKind::RemoveNoncausalEqual, &s, Some(&c), 3).unwrap();
        assert_eq!(out.removed_ids(), &set(&[3]));
    }

    #[test]
    fn label_kinds_require_labels() {
        let s = scenario("s", &[(1, 5.0, 5.0)]);
        for kind in [
            PerturbationKind::RemoveCausal,
            PerturbationKind::RemoveNoncausal,
            PerturbationKind::RemoveNoncausalEqual,
        ] {
            assert!(matches!(apply(kind, &s, None, 0), Err(Error::UnlabeledScenario(_))));
        }
        let out = apply(PerturbationKind::RemoveStatic, &s, None, 0).unwrap();
        assert_eq!(out.removed_ids(), &set(&[1]));
        assert_eq!(out.covariates.num_causal, None);
    }

    #[test]
    fn min_removed_distance_uses_current_step() {
        // AV sits at x = 10 at the current step
        let mut s = scenario("s", &[(1, 13.0, 4.0), (2, 40.0, 0.0)]);
        // agent 1 only valid early; nearest valid to index 10 is index 4
        for (t, st) in s.agents[1].states.iter_mut().enumerate() {
            st.valid = t <= 4;
        }
        s.canonicalize();
        s.agents[1].states[4].x = 13.0;
        s.agents[1].states[4].y = 4.0;
        let c = CausalSet::from_ids("s", []);
        let out = apply(PerturbationKind::RemoveNoncausal, &s, Some(&c), 0).unwrap();
        assert!((out.covariates.min_removed_distance.unwrap() - 5.0).abs() < 1e-12);

        let none = apply(PerturbationKind::RemoveCausal, &s, Some(&c), 0).unwrap();
        assert_eq!(none.covariates.min_removed_distance, None);
        assert_eq!(none.covariates.removed_fraction_of_context, 0.0);
    }

    #[test]
    fn certificate() {
        let s = scenario("s", &[(1, 5.0, 5.0), (2, 6.0, 6.0)]);
        let c = CausalSet::from_ids("s", [AgentId(1)]);
        let rn = apply(PerturbationKind::RemoveNoncausal, &s, Some(&c), 0).unwrap();
        let rc = apply(PerturbationKind::RemoveCausal, &s, Some(&c), 0).unwrap();
        assert!(is_noncausal_perturbation_certificate(&s, &rn, &c));
        assert!(!is_noncausal_perturbation_certificate(&s, &rc, &c));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PerturbationKind::ALL {
            assert_eq!(k.as_str().parse::<PerturbationKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}
