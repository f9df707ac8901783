//! Synthetic straight-lane scenarios whose causal structure is known.
//!
//! The AV follows the intelligent driver model (IDM) behind whatever agent is
//! nearest ahead inside its lane. Every other agent moves on a fixed script,
//! so an agent is causal exactly when it ever becomes the AV's leader, and
//! re-running the AV dynamics on a perturbed scenario decides causality.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::CausalLabelFile;
use crate::perturb::delete_agents;
use crate::scenario::{
    write_scenario, AgentId, AgentState, AgentTrack, AgentType, RoadFeature, RoadFeatureType, Scenario,
    CURRENT_INDEX, NUM_STEPS, STEP_SECONDS,
};
use crate::seed::KeyHasher;

pub const LANE_HALF_WIDTH: f64 = 1.85;
pub const SYNTH_LABELER: &str = "synthetic";
pub const MAX_ATTEMPTS: usize = 100;
/// Minimum AV deviation (m) a causal agent's deletion must cause.
pub const CAUSAL_DEVIATION: f64 = 0.1;

const AV_ID: AgentId = AgentId(0);
const LEAD_ID: AgentId = AgentId(1);
const PEDESTRIAN_ID: AgentId = AgentId(2);
const PARKED_BASE: i64 = 10;
const FAR_BASE: i64 = 100;
const PEDESTRIAN_SPEED: f64 = 1.4;
/// Seconds after the current step within which a crossing pedestrian enters the lane.
const PEDESTRIAN_WINDOW: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    pub a_max: f64,
    /// Comfortable deceleration (m/s²).
    pub b: f64,
    /// Minimum standstill gap (m).
    pub s0: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 15.0,
            time_headway: 1.5,
            a_max: 1.5,
            b: 2.0,
            s0: 2.0,
        }
    }
}

impl IdmParams {
    fn validate(&self) -> Result<()> {
        let all = [self.v0, self.time_headway, self.a_max, self.b, self.s0];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("IDM parameters must be positive".into()))
        }
    }

    /// Acceleration for speed `v`; `leader` is `(gap, approach_rate)` when an
    /// obstacle is ahead.
    pub fn acceleration(&self, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / self.v0).powi(4);
        match leader {
            None => self.a_max * free,
            Some((gap, dv)) => {
                let s_star = self.s0 + v * self.time_headway + v * dv / (2.0 * (self.a_max * self.b).sqrt());
                self.a_max * (free - (s_star / gap).powi(2))
            }
        }
    }

    /// Steady-state gap behind a leader moving at constant speed `v`.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        (self.s0 + v * self.time_headway) / (1.0 - (v / self.v0).powi(4)).sqrt()
    }
}

/// One longitudinal Euler step of the IDM.
pub fn idm_step(idm: &IdmParams, x: f64, v: f64, leader: Option<(f64, f64)>) -> (f64, f64) {
    let a = idm.acceleration(v, leader);
    (x + v * STEP_SECONDS, (v + a * STEP_SECONDS).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_parked: usize,
    pub n_far: usize,
    /// 0 or 1.
    pub n_lead: u8,
    /// Lead speed (m/s); zero places a stationary lead.
    pub lead_speed: f64,
    pub pedestrian_cross: bool,
    pub lane_length: f64,
    pub idm: IdmParams,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_parked: 3,
            n_far: 1,
            n_lead: 1,
            lead_speed: 8.0,
            pedestrian_cross: false,
            lane_length: 200.0,
            idm: IdmParams::default(),
            seed: 0,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        self.idm.validate()?;
        if self.n_lead > 1 {
            return Err(Error::Config("n_lead must be 0 or 1".into()));
        }
        if !(self.lead_speed >= 0.0) || !(self.lane_length > 50.0) {
            return Err(Error::Config("lead_speed must be >= 0 and lane_length > 50 m".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    LeadVehicle,
    CrossingPedestrian,
    Parked,
    FarTraffic,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub causal_ids: BTreeSet<AgentId>,
    pub noncausal_ids: BTreeSet<AgentId>,
    pub rationale: BTreeMap<AgentId, Rationale>,
}

impl SynthGroundTruth {
    pub fn causal_fraction(&self) -> f64 {
        let n = self.causal_ids.len() + self.noncausal_ids.len();
        if n == 0 {
            0.0
        } else {
            self.causal_ids.len() as f64 / n as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub scenario: Scenario,
    pub truth: SynthGroundTruth,
    pub idm: IdmParams,
}

impl SynthScene {
    /// Label entry for this scene: the causal set under a single labeler.
    pub fn label_entry(&self) -> BTreeMap<String, Vec<AgentId>> {
        BTreeMap::from([(
            SYNTH_LABELER.to_string(),
            self.truth.causal_ids.iter().copied().collect(),
        )])
    }
}

fn in_lane(s: &AgentState) -> bool {
    s.y.abs() - s.width / 2.0 < LANE_HALF_WIDTH
}

/// Nearest in-lane obstacle ahead of the AV at `step`: `(gap, approach_rate)`.
fn leader_at(scenario: &Scenario, step: usize, av_x: f64, av_v: f64, av_length: f64) -> Option<(f64, f64)> {
    let front = av_x + av_length / 2.0;
    scenario
        .agents
        .iter()
        .filter(|t| t.agent_id != scenario.av_agent_id)
        .filter_map(|t| t.states.get(step))
        .filter(|s| s.valid && in_lane(s) && s.x > av_x)
        .map(|s| (s.x - s.length / 2.0 - front, av_v - s.vx))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// AV rollout result: per-step `(x, v)` and the smallest gap seen.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub min_gap: f64,
}

impl Rollout {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.x.iter().map(|&x| [x, 0.0]).collect()
    }
}

/// Re-runs the AV dynamics from the AV's first state against the valid states
/// of the other agents in `scenario`.
pub fn simulate_av(scenario: &Scenario, idm: &IdmParams) -> Result<Rollout> {
    let av = scenario.av()?;
    let init = av.states[0];
    if !init.valid {
        return Err(Error::invalid(&scenario.scenario_id, "AV not valid at step 0"));
    }
    let mut x = vec![init.x];
    let mut v = vec![init.vx];
    let mut min_gap = f64::INFINITY;
    for step in 0..NUM_STEPS - 1 {
        let (xi, vi) = (x[step], v[step]);
        let leader = leader_at(scenario, step, xi, vi, init.length).map(|(gap, dv)| {
            min_gap = min_gap.min(gap);
            (gap.max(0.1), dv)
        });
        let (nx, nv) = idm_step(idm, xi, vi, leader);
        x.push(nx);
        v.push(nv);
    }
    Ok(Rollout { x, v, min_gap })
}

/// Largest per-step distance between the AV rollouts of two scenarios.
pub fn max_deviation(a: &Rollout, b: &Rollout) -> f64 {
    a.x.iter().zip(&b.x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Deletes `ids` and re-simulates; returns the maximum AV deviation from the
/// scene's recorded AV track.
pub fn resimulation_deviation(scene: &SynthScene, ids: &BTreeSet<AgentId>) -> Result<f64> {
    let perturbed = delete_agents(&scene.scenario, ids)?;
    let rerun = simulate_av(&perturbed, &scene.idm)?;
    let recorded = scene.scenario.av()?;
    Ok(recorded
        .states
        .iter()
        .zip(rerun.positions())
        .map(|(s, p)| (s.x - p[0]).hypot(s.y - p[1]))
        .fold(0.0, f64::max))
}

fn vehicle_state(x: f64, y: f64, vx: f64, heading: f64) -> AgentState {
    AgentState {
        x,
        y,
        z: 0.0,
        vx,
        vy: 0.0,
        heading,
        length: 4.6,
        width: 1.9,
        valid: true,
    }
}

fn track(id: AgentId, agent_type: AgentType, is_context: bool, states: Vec<AgentState>) -> AgentTrack {
    AgentTrack {
        agent_id: id,
        agent_type,
        is_context,
        states,
    }
}

fn time(step: usize) -> f64 {
    step as f64 * STEP_SECONDS
}

/// Builds one candidate scene; `Err(reason)` marks an infeasible draw.
fn attempt(params: &SynthParams, rng: &mut ChaCha8Rng, scenario_id: &str) -> std::result::Result<SynthScene, String> {
    let mut agents = Vec::new();
    let mut rationale = BTreeMap::new();
    let mut causal = BTreeSet::new();

    let av_v = rng.gen_range(8.0..14.0);
    let lead_gap = rng.gen_range(20.0..40.0);

    if params.n_lead == 1 {
        let (x0, v) = if params.lead_speed == 0.0 {
            (rng.gen_range(45.0..70.0), 0.0)
        } else {
            (lead_gap, params.lead_speed)
        };
        let states = (0..NUM_STEPS)
            .map(|i| vehicle_state(x0 + v * time(i), 0.0, v, 0.0))
            .collect();
        agents.push(track(LEAD_ID, AgentType::Vehicle, false, states));
        rationale.insert(LEAD_ID, Rationale::LeadVehicle);
        causal.insert(LEAD_ID);
    }

    let mut crossing_x = None;
    if params.pedestrian_cross {
        let current = time(CURRENT_INDEX);
        let t_enter = current + rng.gen_range(0.5..4.0f64).min(PEDESTRIAN_WINDOW);
        let x_c = av_v * t_enter + rng.gen_range(12.0..30.0);
        let width = 0.6;
        let entry_y = -(LANE_HALF_WIDTH + width / 2.0);
        let states = (0..NUM_STEPS)
            .map(|i| AgentState {
                x: x_c,
                y: entry_y + PEDESTRIAN_SPEED * (time(i) - t_enter),
                z: 0.0,
                vx: 0.0,
                vy: PEDESTRIAN_SPEED,
                heading: FRAC_PI_2,
                length: 0.6,
                width,
                valid: true,
            })
            .collect();
        agents.push(track(PEDESTRIAN_ID, AgentType::Pedestrian, false, states));
        rationale.insert(PEDESTRIAN_ID, Rationale::CrossingPedestrian);
        causal.insert(PEDESTRIAN_ID);
        crossing_x = Some(x_c);
    }

    let mut parked_x: Vec<f64> = Vec::new();
    for k in 0..params.n_parked {
        let x = rng.gen_range(-10.0..params.lane_length);
        if parked_x.iter().any(|p| (p - x).abs() < 7.0) {
            return Err("overlapping parked cars".into());
        }
        if crossing_x.is_some_and(|c| (c - x).abs() < 4.0) {
            return Err("parked car blocks the crosswalk".into());
        }
        parked_x.push(x);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let y = side * rng.gen_range(3.5..5.0);
        let heading = if rng.gen_bool(0.5) { 0.0 } else { -std::f64::consts::PI };
        let states = (0..NUM_STEPS)
            .map(|_| {
                let j = 0.015;
                AgentState {
                    z: rng.gen_range(-j..j),
                    ..vehicle_state(x + rng.gen_range(-j..j), y + rng.gen_range(-j..j), 0.0, heading)
                }
            })
            .collect();
        let id = AgentId(PARKED_BASE + k as i64);
        agents.push(track(id, AgentType::Vehicle, true, states));
        rationale.insert(id, Rationale::Parked);
    }

    for k in 0..params.n_far {
        let cyclist = rng.gen_bool(0.3);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let y = side * rng.gen_range(25.0..40.0);
        let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let speed = if cyclist { rng.gen_range(3.0..7.0) } else { rng.gen_range(6.0..15.0) };
        let x0 = rng.gen_range(-30.0..params.lane_length);
        let heading = if dir > 0.0 { 0.0 } else { -std::f64::consts::PI };
        let states = (0..NUM_STEPS)
            .map(|i| {
                let mut s = vehicle_state(x0 + dir * speed * time(i), y, dir * speed, heading);
                if cyclist {
                    s.length = 1.8;
                    s.width = 0.7;
                }
                s
            })
            .collect();
        let id = AgentId(FAR_BASE + k as i64);
        let agent_type = if cyclist { AgentType::Cyclist } else { AgentType::Vehicle };
        agents.push(track(id, agent_type, true, states));
        rationale.insert(id, Rationale::FarTraffic);
    }

    // AV placeholder: only the initial state matters to the rollout.
    let mut av_states = vec![AgentState::INVALID; NUM_STEPS];
    av_states[0] = vehicle_state(0.0, 0.0, av_v, 0.0);
    agents.insert(0, track(AV_ID, AgentType::Vehicle, false, av_states));

    let mut scenario = Scenario {
        scenario_id: scenario_id.to_string(),
        av_agent_id: AV_ID,
        timestamps: (0..NUM_STEPS).map(time).collect(),
        agents,
        roadgraph: roadgraph(params.lane_length, crossing_x),
    };
    let rollout = simulate_av(&scenario, &params.idm).map_err(|e| e.to_string())?;
    if rollout.min_gap < 0.5 {
        return Err(format!("AV collides (gap {:.2} m)", rollout.min_gap));
    }
    scenario.agents[0].states = rollout
        .x
        .iter()
        .zip(&rollout.v)
        .map(|(&x, &v)| vehicle_state(x, 0.0, v, 0.0))
        .collect();

    let noncausal: BTreeSet<AgentId> = rationale.keys().filter(|id| !causal.contains(id)).copied().collect();
    let scene = SynthScene {
        scenario,
        truth: SynthGroundTruth {
            causal_ids: causal,
            noncausal_ids: noncausal,
            rationale,
        },
        idm: params.idm,
    };

    if resimulation_deviation(&scene, &scene.truth.noncausal_ids).map_err(|e| e.to_string())? != 0.0 {
        return Err("non-causal agents influence the AV".into());
    }
    for &id in &scene.truth.causal_ids {
        let dev = resimulation_deviation(&scene, &BTreeSet::from([id])).map_err(|e| e.to_string())?;
        if !(dev > CAUSAL_DEVIATION) {
            return Err(format!("agent {id} deviates the AV by only {dev:.3} m"));
        }
    }
    Ok(scene)
}

fn roadgraph(lane_length: f64, crossing_x: Option<f64>) -> Vec<RoadFeature> {
    let line = |id, feature_type, a: [f64; 2], b: [f64; 2]| RoadFeature {
        feature_id: id,
        feature_type,
        polyline: vec![[a[0], a[1], 0.0], [b[0], b[1], 0.0]],
    };
    let mut features = vec![
        line(1, RoadFeatureType::LaneCenter, [-20.0, 0.0], [lane_length, 0.0]),
        line(2, RoadFeatureType::RoadEdge, [-20.0, -LANE_HALF_WIDTH], [lane_length, -LANE_HALF_WIDTH]),
        line(3, RoadFeatureType::RoadEdge, [-20.0, LANE_HALF_WIDTH], [lane_length, LANE_HALF_WIDTH]),
    ];
    if let Some(x) = crossing_x {
        features.push(line(4, RoadFeatureType::Crosswalk, [x, -6.0], [x, 6.0]));
    }
    features
}

/// Generates one scene. Infeasible draws are retried with derived sub-seeds.
pub fn generate(params: &SynthParams) -> Result<SynthScene> {
    params.validate()?;
    let scenario_id = format!("synth-{:016x}", params.seed);
    let mut last = String::new();
    for a in 0..MAX_ATTEMPTS {
        let mut rng = KeyHasher::new(params.seed, "synthgen").u64(a as u64).rng();
        match attempt(params, &mut rng, &scenario_id) {
            Ok(scene) => return Ok(scene),
            Err(reason) => last = reason,
        }
    }
    Err(Error::Infeasible {
        attempts: MAX_ATTEMPTS,
        reason: last,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamsDistribution {
    /// Every scene uses these parameters with a per-index seed.
    Fixed(SynthParams),
    /// Random mixture of free-road, lead-following and pedestrian-crossing
    /// templates. A stationary lead is static and causal, so it is opt-in.
    Mixture { include_stationary_lead: bool },
}

impl Default for ParamsDistribution {
    fn default() -> Self {
        ParamsDistribution::Mixture {
            include_stationary_lead: false,
        }
    }
}

impl ParamsDistribution {
    pub fn sample(&self, seed: u64) -> SynthParams {
        match self {
            ParamsDistribution::Fixed(p) => SynthParams { seed, ..p.clone() },
            ParamsDistribution::Mixture {
                include_stationary_lead,
            } => {
                let mut rng = KeyHasher::new(seed, "template").rng();
                let templates = if *include_stationary_lead { 5 } else { 4 };
                let (n_lead, lead_speed, pedestrian_cross) = match rng.gen_range(0..templates) {
                    0 => (0, 0.0, false),
                    1 => (1, rng.gen_range(5.0..11.0), false),
                    2 => (0, 0.0, true),
                    3 => (1, rng.gen_range(5.0..11.0), true),
                    _ => (1, 0.0, false),
                };
                SynthParams {
                    n_parked: rng.gen_range(1..=6),
                    n_far: rng.gen_range(0..=4),
                    n_lead,
                    lead_speed,
                    pedestrian_cross,
                    seed,
                    ..SynthParams::default()
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthCorpus {
    pub scenes: Vec<SynthScene>,
}

impl SynthCorpus {
    pub fn scenarios(&self) -> impl Iterator<Item = &Scenario> + '_ {
        self.scenes.iter().map(|s| &s.scenario)
    }

    pub fn labels(&self) -> CausalLabelFile {
        CausalLabelFile {
            entries: self
                .scenes
                .iter()
                .map(|s| (s.scenario.scenario_id.clone(), s.label_entry()))
                .collect(),
        }
    }

    pub fn ground_truth(&self) -> BTreeMap<String, SynthGroundTruth> {
        self.scenes
            .iter()
            .map(|s| (s.scenario.scenario_id.clone(), s.truth.clone()))
            .collect()
    }

    /// Writes `<prefix>.scenarios.jsonl`, `<prefix>.labels.json` and
    /// `<prefix>.ground_truth.json`; returns the three paths.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
        let prefix = prefix.as_ref().as_os_str().to_string_lossy().into_owned();
        let paths = [
            PathBuf::from(format!("{prefix}.scenarios.jsonl")),
            PathBuf::from(format!("{prefix}.labels.json")),
            PathBuf::from(format!("{prefix}.ground_truth.json")),
        ];
        let create = |p: &Path| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };

        let mut out = create(&paths[0])?;
        for s in self.scenarios() {
            write_scenario(&mut out, s).map_err(|e| Error::io(&paths[0], e))?;
        }
        out.flush().map_err(|e| Error::io(&paths[0], e))?;

        crate::labels::save_labels(&paths[1], &self.labels())?;

        let mut out = create(&paths[2])?;
        serde_json::to_writer(&mut out, &self.ground_truth()).map_err(|e| Error::io(&paths[2], e.into()))?;
        out.write_all(b"\n")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&paths[2], e))?;
        Ok(paths)
    }
}

/// Deterministic corpus of `n` scenes; scene `i` is generated from a seed
/// derived from `(seed, i)` so generation parallelizes freely.
pub fn generate_corpus(n: usize, dist: &ParamsDistribution, seed: u64) -> Result<SynthCorpus> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let scenes = (0..n)
        .into_par_iter()
        .map(|i| {
            let params = dist.sample(KeyHasher::new(seed, "corpus").u64(i as u64).finish());
            let mut scene = generate(&params)?;
            scene.scenario.scenario_id = format!("synth_{i:06}");
            Ok(scene)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCorpus { scenes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::agent_displacement;

    #[test]
    fn free_road_has_no_causal_agents_and_approaches_v0() {
        let params = SynthParams {
            n_lead: 0,
            n_parked: 5,
            n_far: 0,
            pedestrian_cross: false,
            seed: 4,
            ..SynthParams::default()
        };
        let scene = generate(&params).unwrap();
        assert!(scene.truth.causal_ids.is_empty());
        assert_eq!(scene.truth.noncausal_ids.len(), 5);
        let v: Vec<f64> = scene.scenario.av().unwrap().states.iter().map(|s| s.vx).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0] && w[1] <= 15.0));
        // free-road IDM from the same initial speed
        let mut x = 0.0;
        let mut vv = v[0];
        for s in &scene.scenario.av().unwrap().states {
            assert_eq!(s.x, x);
            (x, vv) = idm_step(&params.idm, x, vv, None);
        }
    }

    #[test]
    fn stationary_lead_is_causal_parked_is_not() {
        let params = SynthParams {
            lead_speed: 0.0,
            n_parked: 4,
            seed: 9,
            ..SynthParams::default()
        };
        let scene = generate(&params).unwrap();
        let av = scene.scenario.av().unwrap();
        assert!(av.states.last().unwrap().vx < av.states[0].vx, "AV should slow down");
        assert!(resimulation_deviation(&scene, &BTreeSet::from([LEAD_ID])).unwrap() > CAUSAL_DEVIATION);
        for id in &scene.truth.noncausal_ids {
            assert_eq!(resimulation_deviation(&scene, &BTreeSet::from([*id])).unwrap(), 0.0);
        }
    }

    #[test]
    fn parked_cars_are_static_moving_lead_is_not() {
        let scene = generate(&SynthParams {
            n_parked: 6,
            seed: 21,
            ..SynthParams::default()
        })
        .unwrap();
        for (id, r) in &scene.truth.rationale {
            let d = agent_displacement(scene.scenario.agent(*id).unwrap()).unwrap();
            match r {
                Rationale::Parked => assert!(d <= 0.1, "{id}: {d}"),
                Rationale::LeadVehicle => assert!(d > 0.1),
                _ => {}
            }
        }
    }

    #[test]
    fn pedestrian_crossing_is_causal() {
        let scene = generate(&SynthParams {
            n_lead: 0,
            pedestrian_cross: true,
            seed: 5,
            ..SynthParams::default()
        })
        .unwrap();
        assert!(scene.truth.causal_ids.contains(&PEDESTRIAN_ID));
        let ped = scene.scenario.agent(PEDESTRIAN_ID).unwrap();
        let enters = ped.states[CURRENT_INDEX..].iter().any(in_lane);
        assert!(enters);
    }

    #[test]
    fn equilibrium_gap_fixed_point() {
        let idm = IdmParams::default();
        let v_lead = 5.0;
        let (mut x, mut v) = (0.0, 9.0);
        let mut lead = 30.0;
        for _ in 0..20_000 {
            let gap = lead - x;
            (x, v) = idm_step(&idm, x, v, Some((gap, v - v_lead)));
            lead += v_lead * STEP_SECONDS;
        }
        let gap = lead - x;
        assert!((gap - idm.equilibrium_gap(v_lead)).abs() < 1e-6, "{gap}");
        // within 1% of the linear estimate s0 + vT at this speed ratio
        let linear = idm.s0 + v_lead * idm.time_headway;
        assert!((gap - linear).abs() / linear < 0.01);
        assert!((v - v_lead).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SynthParams {
            pedestrian_cross: true,
            seed: 77,
            ..SynthParams::default()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let dist = ParamsDistribution::default();
        assert_eq!(generate_corpus(3, &dist, 1).unwrap(), generate_corpus(3, &dist, 1).unwrap());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = SynthParams::default();
        p.idm.b = 0.0;
        assert!(generate(&p).is_err());
        let p = SynthParams {
            n_lead: 2,
            ..SynthParams::default()
        };
        assert!(generate(&p).is_err());
        assert!(generate_corpus(0, &ParamsDistribution::default(), 0).is_err());
    }
}
