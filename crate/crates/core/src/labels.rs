//! Causal label ingestion and aggregation.
//!
//! A label file maps `scenario_id -> labeler_id -> [agent_id]`. An agent is
//! causal when any labeler selected it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};

use crate::error::{Error, Result};
use crate::scenario::{AgentId, Scenario};

/// Labeler counts above this are accepted but logged.
pub const EXPECTED_MAX_LABELERS: usize = 5;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CausalLabelFile {
    pub entries: BTreeMap<String, BTreeMap<String, Vec<AgentId>>>,
}

impl CausalLabelFile {
    pub fn get(&self, scenario_id: &str) -> Option<&BTreeMap<String, Vec<AgentId>>> {
        self.entries.get(scenario_id)
    }

    pub fn insert(&mut self, scenario_id: impl Into<String>, labeler: impl Into<String>, ids: Vec<AgentId>) {
        self.entries
            .entry(scenario_id.into())
            .or_default()
            .insert(labeler.into(), ids);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl serde::Serialize for CausalLabelFile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

/// JSON object read as an ordered list of pairs so duplicate keys survive
/// deserialization and can be reported.
struct Pairs<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Pairs<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PairsVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for PairsVisitor<V> {
            type Value = Pairs<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, V>()? {
                    out.push(entry);
                }
                Ok(Pairs(out))
            }
        }

        d.deserialize_map(PairsVisitor(PhantomData))
    }
}

pub fn parse_labels(text: &str) -> Result<CausalLabelFile> {
    let raw: Pairs<Pairs<Vec<AgentId>>> = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut file = CausalLabelFile::default();
    for (scenario_id, labelers) in raw.0 {
        if file.entries.contains_key(&scenario_id) {
            return Err(Error::DuplicateLabelEntry(scenario_id));
        }
        let mut per_labeler = BTreeMap::new();
        for (labeler, ids) in labelers.0 {
            let mut seen = BTreeSet::new();
            let deduped: Vec<AgentId> = ids.into_iter().filter(|id| seen.insert(*id)).collect();
            if per_labeler.insert(labeler.clone(), deduped).is_some() {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("scenario {scenario_id}: duplicate labeler `{labeler}`"),
                });
            }
        }
        if per_labeler.len() > EXPECTED_MAX_LABELERS {
            tracing::warn!(
                scenario_id = %scenario_id,
                labelers = per_labeler.len(),
                "more labelers than expected"
            );
        }
        file.entries.insert(scenario_id, per_labeler);
    }
    Ok(file)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<CausalLabelFile> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &CausalLabelFile) -> Result<()> {
    let path = path.as_ref();
    let mut out = File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(&mut out, labels).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Union of all labelers' selections for one scenario, with per-agent
/// selection counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CausalSet {
    pub scenario_id: String,
    pub agreement: BTreeMap<AgentId, u32>,
}

impl CausalSet {
    pub fn from_ids(scenario_id: impl Into<String>, ids: impl IntoIterator<Item = AgentId>) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            agreement: ids.into_iter().map(|id| (id, 1)).collect(),
        }
    }

    pub fn causal_ids(&self) -> BTreeSet<AgentId> {
        self.agreement.keys().copied().collect()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.agreement.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.agreement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agreement.is_empty()
    }

    /// Drops the AV and ids absent from the scenario. Returns the number of
    /// dangling ids removed.
    pub fn restrict_to(&mut self, scenario: &Scenario) -> usize {
        self.agreement.remove(&scenario.av_agent_id);
        let before = self.agreement.len();
        self.agreement.retain(|id, _| scenario.agent(*id).is_some());
        before - self.agreement.len()
    }
}

pub fn causal_union(labels: &CausalLabelFile, scenario_id: &str) -> Result<CausalSet> {
    let entry = labels
        .get(scenario_id)
        .ok_or_else(|| Error::UnlabeledScenario(scenario_id.to_string()))?;
    let mut set = CausalSet {
        scenario_id: scenario_id.to_string(),
        agreement: BTreeMap::new(),
    };
    for ids in entry.values() {
        for id in ids {
            *set.agreement.entry(*id).or_insert(0) += 1;
        }
    }
    Ok(set)
}

/// `causal_union` restricted to agents present in the scenario, excluding the AV.
pub fn resolve_causal(labels: &CausalLabelFile, scenario: &Scenario) -> Result<CausalSet> {
    let mut set = causal_union(labels, &scenario.scenario_id)?;
    let dropped = set.restrict_to(scenario);
    if dropped > 0 {
        tracing::warn!(
            scenario_id = %scenario.scenario_id,
            dropped,
            "labels reference agents absent from the scenario"
        );
    }
    Ok(set)
}

/// Histogram of "number of labelers who selected an agent" over causal agents.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgreementHistogram {
    pub counts: BTreeMap<u32, u64>,
}

impl AgreementHistogram {
    pub fn add(&mut self, set: &CausalSet) {
        for &c in set.agreement.values() {
            *self.counts.entry(c).or_insert(0) += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Fraction of causal agents selected by exactly one labeler.
    pub fn fraction_single(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| *self.counts.get(&1).unwrap_or(&0) as f64 / total as f64)
    }
}

/// Agreement histogram over the labeled scenarios of a corpus.
pub fn agreement_histogram<'a>(
    labels: &CausalLabelFile,
    corpus: impl IntoIterator<Item = &'a Scenario>,
) -> AgreementHistogram {
    let mut hist = AgreementHistogram::default();
    for scenario in corpus {
        if let Ok(set) = resolve_causal(labels, scenario) {
            hist.add(&set);
        }
    }
    hist
}
