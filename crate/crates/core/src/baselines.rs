//! Built-in AV predictors.
//!
//! `ConstantVelocity` and `ConstantTurnRate` only read the AV track, so any
//! agent deletion leaves their output untouched. `SocialRepulsion` pushes the
//! constant-velocity rollout away from nearby agents and is therefore
//! sensitive to deletions within its influence radius.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    wrap_angle, AgentState, PredictionSet, Scenario, ScoredTrajectory, Trajectory, CURRENT_INDEX,
    FUTURE_STEPS, STEP_SECONDS,
};

/// Speed multipliers defining the modes, in mode order.
pub const SPEED_MULTIPLIERS: [f64; 6] = [0.0, 0.5, 0.8, 1.0, 1.2, 1.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    ConstantVelocity,
    ConstantTurnRate,
    SocialRepulsion,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 3] = [
        PredictorKind::ConstantVelocity,
        PredictorKind::ConstantTurnRate,
        PredictorKind::SocialRepulsion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::ConstantVelocity => "constant-velocity",
            PredictorKind::ConstantTurnRate => "constant-turn-rate",
            PredictorKind::SocialRepulsion => "social-repulsion",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown predictor `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialParams {
    pub influence_radius: f64,
    pub repulsion_gain: f64,
}

impl Default for SocialParams {
    fn default() -> Self {
        Self {
            influence_radius: 15.0,
            repulsion_gain: 2.0,
        }
    }
}

fn constant_velocity(av: &AgentState, multiplier: f64) -> Vec<[f64; 2]> {
    (1..=FUTURE_STEPS)
        .map(|t| {
            let dt = STEP_SECONDS * t as f64;
            [
                av.x + multiplier * av.vx * dt,
                av.y + multiplier * av.vy * dt,
            ]
        })
        .collect()
}

/// Heading rate from the last two valid headings at or before the current step.
fn heading_rate(scenario: &Scenario) -> Result<f64> {
    let av = scenario.av()?;
    let Some((i2, s2)) = av.last_valid_at_or_before(CURRENT_INDEX) else {
        return Ok(0.0);
    };
    let Some((i1, s1)) = i2.checked_sub(1).and_then(|i| av.last_valid_at_or_before(i)) else {
        return Ok(0.0);
    };
    Ok(wrap_angle(s2.heading - s1.heading) / ((i2 - i1) as f64 * STEP_SECONDS))
}

fn constant_turn_rate(av: &AgentState, rate: f64, multiplier: f64) -> Vec<[f64; 2]> {
    let speed = multiplier * av.speed();
    let theta0 = if av.speed() > 0.0 {
        av.vy.atan2(av.vx)
    } else {
        av.heading
    };
    if rate.abs() < 1e-9 {
        return constant_velocity(av, multiplier);
    }
    (1..=FUTURE_STEPS)
        .map(|t| {
            let theta = theta0 + rate * STEP_SECONDS * t as f64;
            [
                av.x + speed / rate * (theta.sin() - theta0.sin()),
                av.y + speed / rate * (theta0.cos() - theta.cos()),
            ]
        })
        .collect()
}

/// Last valid position at or before the current step of every non-AV agent.
pub fn context_positions(scenario: &Scenario) -> Vec<[f64; 2]> {
    scenario
        .agents
        .iter()
        .filter(|t| t.agent_id != scenario.av_agent_id)
        .filter_map(|t| t.last_valid_at_or_before(CURRENT_INDEX))
        .map(|(_, s)| s.xy())
        .collect()
}

fn repulsion(at: [f64; 2], others: &[[f64; 2]], params: &SocialParams) -> [f64; 2] {
    let mut f = [0.0, 0.0];
    for q in others {
        let (dx, dy) = (at[0] - q[0], at[1] - q[1]);
        let d = dx.hypot(dy);
        if d == 0.0 || d >= params.influence_radius {
            continue;
        }
        let w = params.repulsion_gain * (1.0 - d / params.influence_radius);
        f[0] += w * dx / d;
        f[1] += w * dy / d;
    }
    f
}

/// Constant-velocity rollout plus an accumulated repulsive offset evaluated at
/// the previous predicted point (the current position for the first step).
fn social(av: &AgentState, others: &[[f64; 2]], multiplier: f64, params: &SocialParams) -> Vec<[f64; 2]> {
    let base = constant_velocity(av, multiplier);
    let mut offset = [0.0, 0.0];
    let mut prev = av.xy();
    base.iter()
        .map(|c| {
            let f = repulsion(prev, others, params);
            offset[0] += STEP_SECONDS * f[0];
            offset[1] += STEP_SECONDS * f[1];
            let p = [c[0] + offset[0], c[1] + offset[1]];
            prev = p;
            p
        })
        .collect()
}

pub fn predict(kind: PredictorKind, scenario: &Scenario, k: usize, params: &SocialParams) -> Result<PredictionSet> {
    if k == 0 || k > SPEED_MULTIPLIERS.len() {
        return Err(Error::Config(format!(
            "k must be in 1..={}, got {k}",
            SPEED_MULTIPLIERS.len()
        )));
    }
    if !(params.influence_radius > 0.0) {
        return Err(Error::Config("influence_radius must be positive".into()));
    }
    let av = *scenario.av_current()?;
    let rate = match kind {
        PredictorKind::ConstantTurnRate => heading_rate(scenario)?,
        _ => 0.0,
    };
    let others = match kind {
        PredictorKind::SocialRepulsion => context_positions(scenario),
        _ => Vec::new(),
    };
    let trajectories = SPEED_MULTIPLIERS[..k]
        .iter()
        .map(|&m| {
            let points = match kind {
                PredictorKind::ConstantVelocity => constant_velocity(&av, m),
                PredictorKind::ConstantTurnRate => constant_turn_rate(&av, rate, m),
                PredictorKind::SocialRepulsion => social(&av, &others, m, params),
            };
            ScoredTrajectory {
                probability: 1.0 / k as f64,
                points: Trajectory::new(points),
            }
        })
        .collect();
    Ok(PredictionSet {
        scenario_id: scenario.scenario_id.clone(),
        variant: String::new(),
        trajectories,
    })
}

/// Runs a predictor over a scenario stream and writes one prediction record
/// per scenario tagged with `variant`. Returns the number of records written.
pub fn run_predictor(
    kind: PredictorKind,
    corpus: impl IntoIterator<Item = Result<Scenario>>,
    out_path: impl AsRef<Path>,
    variant: &str,
) -> Result<usize> {
    let path = out_path.as_ref();
    let mut out = File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))?;
    let mut n = 0;
    for scenario in corpus {
        let mut set = predict(kind, &scenario?, SPEED_MULTIPLIERS.len(), &SocialParams::default())?;
        set.variant = variant.to_string();
        crate::scenario::write_prediction(&mut out, &set).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}
