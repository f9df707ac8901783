//! Independent reference implementations and fixtures shared by the
//! integration suites. Nothing here calls into the metric code under test.
#![allow(dead_code)]

use std::collections::BTreeSet;

use causal_perturb::scenario::{
    AgentId, AgentState, AgentTrack, AgentType, PredictionSet, RoadFeature, RoadFeatureType, Scenario,
    ScoredTrajectory, Trajectory, NUM_STEPS,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn l2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Brute-force minADE: enumerate every horizon and mode, average the horizon minima.
pub fn oracle_min_ade(gt: &[[f64; 2]], modes: &[Vec<[f64; 2]>], horizon_steps: &[usize]) -> f64 {
    let mut total = 0.0;
    for &h in horizon_steps {
        let mut best = f64::MAX;
        for m in modes {
            let mut s = 0.0;
            for i in 0..h {
                s += l2(m[i], gt[i]);
            }
            let mean = s / h as f64;
            if mean < best {
                best = mean;
            }
        }
        total += best;
    }
    total / horizon_steps.len() as f64
}

pub fn oracle_min_fde(gt: &[[f64; 2]], modes: &[Vec<[f64; 2]>], horizon_steps: &[usize]) -> f64 {
    let mut total = 0.0;
    for &h in horizon_steps {
        let mut best = f64::MAX;
        for m in modes {
            best = best.min(l2(m[h - 1], gt[h - 1]));
        }
        total += best;
    }
    total / horizon_steps.len() as f64
}

/// Voxel set of a trajectory bundle sampled on a global 100 Hz clock.
pub fn oracle_voxels(modes: &[Vec<[f64; 2]>], res: f64) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    for m in modes {
        let n = m.len();
        if n == 1 {
            out.insert(((m[0][0] / res).floor() as i64, (m[0][1] / res).floor() as i64));
            continue;
        }
        for tick in 0..=(n - 1) * 10 {
            let seg = (tick / 10).min(n - 2);
            let j = tick - seg * 10;
            let (a, b) = (m[seg], m[seg + 1]);
            let p = if j == 10 {
                b
            } else {
                let t = j as f64 / 10.0;
                [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
            };
            out.insert(((p[0] / res).floor() as i64, (p[1] / res).floor() as i64));
        }
    }
    out
}

pub fn oracle_iou(a: &[Vec<[f64; 2]>], b: &[Vec<[f64; 2]>], res: f64) -> f64 {
    let va = oracle_voxels(a, res);
    let vb = oracle_voxels(b, res);
    let union: BTreeSet<_> = va.union(&vb).collect();
    let inter = union.iter().filter(|v| va.contains(v) && vb.contains(v)).count();
    inter as f64 / union.len() as f64
}

pub fn oracle_ts_min_ade(a: &[Vec<[f64; 2]>], b: &[Vec<[f64; 2]>]) -> f64 {
    let mut best = f64::MAX;
    for ta in a {
        for tb in b {
            let mut s = 0.0;
            for i in 0..ta.len() {
                s += l2(ta[i], tb[i]);
            }
            best = best.min(s / ta.len() as f64);
        }
    }
    best
}

pub fn oracle_displacement(points: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for a in points {
        for b in points {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            best = best.max(d);
        }
    }
    best
}

pub fn prediction_set(modes: &[Vec<[f64; 2]>]) -> PredictionSet {
    PredictionSet {
        scenario_id: "s".into(),
        variant: "v".into(),
        trajectories: modes
            .iter()
            .map(|m| ScoredTrajectory {
                probability: 1.0 / modes.len() as f64,
                points: Trajectory::new(m.clone()),
            })
            .collect(),
    }
}

/// Random-walk trajectory of `len` points starting near the origin.
pub fn random_walk(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<[f64; 2]> {
    let mut p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
    (0..len)
        .map(|_| {
            p[0] += rng.gen_range(-scale..scale);
            p[1] += rng.gen_range(-scale..scale);
            p
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

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

pub fn parked(id: i64, x: f64, y: f64) -> AgentTrack {
    track(id, AgentType::Vehicle, |_| state(x, y))
}

/// Scenario whose AV (id 0) drives along x at 10 m/s, plus the given tracks.
pub fn scenario(id: &str, others: Vec<AgentTrack>) -> Scenario {
    let mut av = track(0, AgentType::Vehicle, |t| AgentState {
        vx: 10.0,
        ..state(t as f64, 0.0)
    });
    av.is_context = false;
    let mut agents = vec![av];
    agents.extend(others);
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

pub fn ids(v: &[i64]) -> BTreeSet<AgentId> {
    v.iter().map(|&i| AgentId(i)).collect()
}
