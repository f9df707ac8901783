//! Scenario, track and prediction data model plus the line-delimited JSON
//! file formats used by every pipeline stage.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps per track: 11 history steps (including current) plus 80 future steps.
pub const NUM_STEPS: usize = 91;
/// Index of the "current time" step.
pub const CURRENT_INDEX: usize = 10;
pub const FUTURE_STEPS: usize = NUM_STEPS - CURRENT_INDEX - 1;
pub const STEP_HZ: u32 = 10;
pub const STEP_SECONDS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub i64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub valid: bool,
}

impl AgentState {
    pub const INVALID: AgentState = AgentState {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        vx: 0.0,
        vy: 0.0,
        heading: 0.0,
        length: 0.0,
        width: 0.0,
        valid: false,
    };

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Zeroes invalid states and wraps valid headings into [-π, π).
    pub fn canonicalize(&mut self) {
        if !self.valid {
            *self = AgentState::INVALID;
        } else {
            self.heading = wrap_angle(self.heading);
        }
    }
}

/// Wraps an angle into [-π, π). Angles already in range are returned unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Vehicle, AgentType::Pedestrian, AgentType::Cyclist];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentType::Vehicle => "vehicle",
            AgentType::Pedestrian => "pedestrian",
            AgentType::Cyclist => "cyclist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: AgentId,
    pub agent_type: AgentType,
    pub is_context: bool,
    pub states: Vec<AgentState>,
}

impl AgentTrack {
    pub fn valid_states(&self) -> impl Iterator<Item = &AgentState> + '_ {
        self.states.iter().filter(|s| s.valid)
    }

    pub fn has_valid_state(&self) -> bool {
        self.states.iter().any(|s| s.valid)
    }

    /// The valid state temporally closest to `index`; ties go to the earlier step.
    pub fn nearest_valid(&self, index: usize) -> Option<&AgentState> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.valid)
            .min_by_key(|(i, _)| (i.abs_diff(index), *i))
            .map(|(_, s)| s)
    }

    /// Last valid state at or before `index`.
    pub fn last_valid_at_or_before(&self, index: usize) -> Option<(usize, &AgentState)> {
        self.states
            .iter()
            .enumerate()
            .take(index + 1)
            .rev()
            .find(|(_, s)| s.valid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadFeatureType {
    LaneCenter,
    RoadEdge,
    Crosswalk,
    StopLine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadFeature {
    pub feature_id: i64,
    pub feature_type: RoadFeatureType,
    pub polyline: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub av_agent_id: AgentId,
    pub timestamps: Vec<f64>,
    pub agents: Vec<AgentTrack>,
    pub roadgraph: Vec<RoadFeature>,
}

impl Scenario {
    pub fn agent(&self, id: AgentId) -> Option<&AgentTrack> {
        self.agents.iter().find(|a| a.agent_id == id)
    }

    pub fn av(&self) -> Result<&AgentTrack> {
        self.agent(self.av_agent_id).ok_or_else(|| {
            Error::invalid(
                &self.scenario_id,
                format!("av_agent_id {} not among agents", self.av_agent_id),
            )
        })
    }

    /// The AV state at the current step, which validation guarantees is valid.
    pub fn av_current(&self) -> Result<&AgentState> {
        let av = self.av()?;
        match av.states.get(CURRENT_INDEX) {
            Some(s) if s.valid => Ok(s),
            _ => Err(Error::invalid(
                &self.scenario_id,
                "AV is not valid at the current step",
            )),
        }
    }

    pub fn non_av_ids(&self) -> BTreeSet<AgentId> {
        self.agents
            .iter()
            .map(|a| a.agent_id)
            .filter(|&id| id != self.av_agent_id)
            .collect()
    }

    pub fn canonicalize(&mut self) {
        self.agents.sort_by_key(|a| a.agent_id);
        for track in &mut self.agents {
            track.states.iter_mut().for_each(AgentState::canonicalize);
        }
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(&self.scenario_id, msg));

        if self.timestamps.len() != NUM_STEPS {
            return bad(format!(
                "timestamps: expected {NUM_STEPS} entries, found {}",
                self.timestamps.len()
            ));
        }
        if self.timestamps.iter().any(|t| !t.is_finite())
            || self.timestamps.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("timestamps: must be finite and strictly increasing".into());
        }
        let spacing = (self.timestamps[NUM_STEPS - 1] - self.timestamps[0]) / (NUM_STEPS - 1) as f64;
        if (spacing - STEP_SECONDS).abs() > 1e-6 {
            return bad(format!("timestamps: mean spacing {spacing} is not 0.1 s"));
        }

        let mut seen = BTreeSet::new();
        for (i, track) in self.agents.iter().enumerate() {
            if !seen.insert(track.agent_id) {
                return bad(format!("agents[{i}].agent_id: duplicate id {}", track.agent_id));
            }
            if track.states.len() != NUM_STEPS {
                return bad(format!(
                    "agents[{i}].states: expected 91 states, found {}",
                    track.states.len()
                ));
            }
            for (t, s) in track.states.iter().enumerate() {
                let fields = [s.x, s.y, s.z, s.vx, s.vy, s.heading, s.length, s.width];
                if s.valid && fields.iter().any(|v| !v.is_finite()) {
                    return bad(format!("agents[{i}].states[{t}]: non-finite value"));
                }
            }
        }
        let av = self.av()?;
        if !av.states[CURRENT_INDEX].valid {
            return bad(format!(
                "agents: AV {} is not valid at index {CURRENT_INDEX}",
                self.av_agent_id
            ));
        }
        for (i, f) in self.roadgraph.iter().enumerate() {
            if f.polyline.len() < 2 {
                return bad(format!("roadgraph[{i}].polyline: needs at least 2 points"));
            }
        }
        Ok(())
    }
}

/// Maximum 3D distance between any two valid positions of the track.
pub fn agent_displacement(track: &AgentTrack) -> Result<f64> {
    let pts: Vec<[f64; 3]> = track.valid_states().map(AgentState::xyz).collect();
    if pts.is_empty() {
        return Err(Error::NoValidStates(track.agent_id));
    }
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            best = best.max(d2);
        }
    }
    Ok(best.sqrt())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub probability: f64,
    pub points: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub scenario_id: String,
    pub variant: String,
    pub trajectories: Vec<ScoredTrajectory>,
}

impl PredictionSet {
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        self.trajectories.iter().map(|t| &t.points)
    }

    /// Checks probabilities, finiteness and (optionally) the trajectory length.
    pub fn validate(&self, horizon: Option<usize>) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(&self.scenario_id, msg));
        if self.trajectories.is_empty() {
            return bad("trajectories: empty prediction set".into());
        }
        for (k, t) in self.trajectories.iter().enumerate() {
            if !(t.probability >= 0.0) || !t.probability.is_finite() {
                return bad(format!("trajectories[{k}].probability: must be finite and nonnegative"));
            }
            if t.points.is_empty() {
                return bad(format!("trajectories[{k}].points: empty"));
            }
            if t.points.points.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("trajectories[{k}].points: non-finite coordinate"));
            }
            if let Some(h) = horizon {
                if t.points.len() != h {
                    return Err(Error::LengthMismatch(format!(
                        "scenario {} trajectories[{k}]: {} points, declared horizon {h}",
                        self.scenario_id,
                        t.points.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Iterates over non-blank lines of a reader, yielding 1-based line numbers.
struct NumberedLines<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    path: String,
}

impl<R: BufRead> Iterator for NumberedLines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(Ok((self.line_no, l))),
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
        }
    }
}

pub fn parse_scenario_line(line: &str, line_no: usize) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    scenario.validate().map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(scenario.canonical())
}

/// Streaming reader over a scenario file; yields validated, canonical scenarios.
pub struct ScenarioReader<R> {
    inner: NumberedLines<R>,
}

impl<R: BufRead> ScenarioReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            inner: NumberedLines {
                lines: reader.lines(),
                line_no: 0,
                path: "<reader>".into(),
            },
        }
    }
}

impl<R: BufRead> Iterator for ScenarioReader<R> {
    type Item = Result<Scenario>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(
            self.inner
                .next()?
                .and_then(|(n, line)| parse_scenario_line(&line, n)),
        )
    }
}

pub fn open_scenarios(path: impl AsRef<Path>) -> Result<ScenarioReader<BufReader<File>>> {
    let path = path.as_ref();
    let mut reader = ScenarioReader::new(open(path)?);
    reader.inner.path = path.display().to_string();
    Ok(reader)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    open_scenarios(path)?.collect()
}

/// Canonical single-line serialization (agents sorted, invalid states zeroed).
pub fn to_canonical_line(scenario: &Scenario) -> String {
    let canon = scenario.clone().canonical();
    serde_json::to_string(&canon).expect("scenario serialization is infallible")
}

pub fn write_scenario<W: Write>(out: &mut W, scenario: &Scenario) -> std::io::Result<()> {
    out.write_all(to_canonical_line(scenario).as_bytes())?;
    out.write_all(b"\n")
}

pub fn save_scenarios<'a>(
    path: impl AsRef<Path>,
    scenarios: impl IntoIterator<Item = &'a Scenario>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for s in scenarios {
        write_scenario(&mut out, s).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Streaming reader over a prediction file. Rejects duplicate
/// (scenario_id, variant) keys and, when a horizon is declared,
/// trajectories of any other length.
pub struct PredictionReader<R> {
    inner: NumberedLines<R>,
    horizon: Option<usize>,
    seen: HashMap<(String, String), usize>,
}

impl<R: BufRead> PredictionReader<R> {
    pub fn new(reader: R, horizon: Option<usize>) -> Self {
        Self {
            inner: NumberedLines {
                lines: reader.lines(),
                line_no: 0,
                path: "<reader>".into(),
            },
            horizon,
            seen: HashMap::new(),
        }
    }

    fn parse(&mut self, line_no: usize, line: &str) -> Result<PredictionSet> {
        let set: PredictionSet = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        set.validate(self.horizon).map_err(|e| match e {
            Error::LengthMismatch(m) => Error::LengthMismatch(format!("line {line_no}: {m}")),
            other => Error::Parse {
                line: line_no,
                message: other.to_string(),
            },
        })?;
        let key = (set.scenario_id.clone(), set.variant.clone());
        if let Some(&first_line) = self.seen.get(&key) {
            return Err(Error::DuplicatePrediction {
                scenario_id: key.0,
                variant: key.1,
                first_line,
                second_line: line_no,
            });
        }
        self.seen.insert(key, line_no);
        Ok(set)
    }
}

impl<R: BufRead> Iterator for PredictionReader<R> {
    type Item = Result<PredictionSet>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        Some(item.and_then(|(n, line)| self.parse(n, &line)))
    }
}

pub fn load_predictions(path: impl AsRef<Path>, horizon: Option<usize>) -> Result<Vec<PredictionSet>> {
    let path = path.as_ref();
    let mut reader = PredictionReader::new(open(path)?, horizon);
    reader.inner.path = path.display().to_string();
    reader.collect()
}

pub fn write_prediction<W: Write>(out: &mut W, set: &PredictionSet) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, set)?;
    out.write_all(b"\n")
}

pub fn save_predictions<'a>(
    path: impl AsRef<Path>,
    sets: impl IntoIterator<Item = &'a PredictionSet>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for s in sets {
        write_prediction(&mut out, s).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn state(x: f64, y: f64) -> AgentState {
        AgentState {
            x,
            y,
            z: 0.0,
            vx: 0.0,
            vy: 0.0,
            heading: 0.0,
            length: 4.5,
            width: 2.0,
            valid: true,
        }
    }

    pub fn track(id: i64, agent_type: AgentType, f: impl Fn(usize) -> AgentState) -> AgentTrack {
        AgentTrack {
            agent_id: AgentId(id),
            agent_type,
            is_context: true,
            states: (0..NUM_STEPS).map(f).collect(),
        }
    }

    /// AV (id 0) driving along x at 10 m/s plus parked agents at the given positions.
    pub fn scenario(id: &str, others: &[(i64, f64, f64)]) -> Scenario {
        let mut agents = vec![track(0, AgentType::Vehicle, |t| AgentState {
            vx: 10.0,
            ..state(t as f64, 0.0)
        })];
        agents[0].is_context = false;
        for &(aid, x, y) in others {
            agents.push(track(aid, AgentType::Vehicle, |_| state(x, y)));
        }
        Scenario {
            scenario_id: id.into(),
            av_agent_id: AgentId(0),
            timestamps: (0..NUM_STEPS).map(|i| i as f64 * 0.1).collect(),
            agents,
            roadgraph: vec![RoadFeature {
                feature_id: 1,
                feature_type: RoadFeatureType::LaneCenter,
                polyline: vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]],
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn displacement_basic() {
        let t = track(1, AgentType::Vehicle, |_| state(2.0, 3.0));
        assert_eq!(agent_displacement(&t).unwrap(), 0.0);

        let mut t = track(1, AgentType::Vehicle, |_| AgentState::INVALID);
        t.states[3] = state(0.0, 0.0);
        t.states[50] = state(0.3, 0.4);
        assert!((agent_displacement(&t).unwrap() - 0.5).abs() < 1e-12);

        let t = track(1, AgentType::Vehicle, |_| AgentState::INVALID);
        assert!(matches!(agent_displacement(&t), Err(Error::NoValidStates(_))));
    }

    #[test]
    fn displacement_ignores_invalid_coordinates() {
        let mut t = track(1, AgentType::Vehicle, |_| state(1.0, 1.0));
        t.states[7] = AgentState {
            x: 1e6,
            valid: false,
            ..state(0.0, 0.0)
        };
        assert_eq!(agent_displacement(&t).unwrap(), 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.5), 0.5);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(PI) + PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.77);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn av_invalid_at_current_is_rejected() {
        let mut s = scenario("s", &[]);
        s.agents[0].states[CURRENT_INDEX].valid = false;
        let line = serde_json::to_string(&s).unwrap();
        let err = parse_scenario_line(&line, 4).unwrap_err();
        assert!(err.to_string().starts_with("line 4:"), "{err}");
    }

    #[test]
    fn wrong_state_count_is_rejected() {
        let mut s = scenario("s", &[(1, 5.0, 5.0)]);
        s.agents[1].states.pop();
        let line = serde_json::to_string(&s).unwrap();
        let err = parse_scenario_line(&line, 1).unwrap_err().to_string();
        assert!(err.contains("expected 91 states"), "{err}");
    }

    #[test]
    fn malformed_record_names_line_and_field() {
        let s = scenario("s", &[]);
        let line = serde_json::to_string(&s).unwrap().replace("\"valid\":true", "\"valid\":1");
        let err = parse_scenario_line(&line, 2).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
        let line = serde_json::to_string(&s).unwrap().replacen("\"heading\":0.0,", "", 1);
        let err = parse_scenario_line(&line, 9).unwrap_err().to_string();
        assert!(err.contains("line 9") && err.contains("heading"), "{err}");
    }

    #[test]
    fn canonicalization_sorts_and_zeroes() {
        let mut s = scenario("s", &[(9, 1.0, 1.0), (3, 2.0, 2.0)]);
        s.agents[1].states[5].valid = false;
        let c = s.clone().canonical();
        let ids: Vec<i64> = c.agents.iter().map(|a| a.agent_id.0).collect();
        assert_eq!(ids, vec![0, 3, 9]);
        assert_eq!(c.agent(AgentId(9)).unwrap().states[5], AgentState::INVALID);
        assert_eq!(c.clone().canonical(), c);
    }

    #[test]
    fn prediction_duplicate_names_both_lines() {
        let set = PredictionSet {
            scenario_id: "s".into(),
            variant: "original".into(),
            trajectories: vec![ScoredTrajectory {
                probability: 1.0,
                points: Trajectory::new(vec![[0.0, 0.0]; 3]),
            }],
        };
        let line = serde_json::to_string(&set).unwrap();
        let text = format!("{line}\n\n{line}\n");
        let res: Result<Vec<_>> = PredictionReader::new(text.as_bytes(), None).collect();
        match res {
            Err(Error::DuplicatePrediction {
                first_line,
                second_line,
                ..
            }) => assert_eq!((first_line, second_line), (1, 3)),
            other => panic!("{other:?}"),
        }
        let res: Result<Vec<_>> = PredictionReader::new(text.as_bytes(), Some(80)).collect();
        assert!(matches!(res, Err(Error::LengthMismatch(_))));
    }
}
