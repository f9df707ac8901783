//! Displacement metrics (minADE, minFDE) and the robustness metrics that
//! compare predictions on original and perturbed scenes: per-example
//! absolute change, trajectory-set IoU and trajectory-set minADE.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{PredictionSet, Trajectory, STEP_HZ};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Horizons in seconds, sorted ascending.
    pub horizons: Vec<f64>,
    pub step_hz: u32,
    pub k: usize,
    /// Voxel edge length in meters for the trajectory-set IoU.
    pub iou_resolution: f64,
    pub iou_upsample_hz: u32,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            horizons: vec![3.0, 5.0, 8.0],
            step_hz: STEP_HZ,
            k: 6,
            iou_resolution: 0.5,
            iou_upsample_hz: 100,
        }
    }
}

impl MetricConfig {
    /// Horizons converted to step counts.
    pub fn horizon_steps(&self) -> Result<Vec<usize>> {
        if self.horizons.is_empty() {
            return Err(Error::Config("no horizons".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("horizons must be sorted".into()));
        }
        self.horizons
            .iter()
            .map(|&h| {
                let steps = h * self.step_hz as f64;
                let rounded = steps.round();
                if !(rounded >= 1.0) || (steps - rounded).abs() > 1e-9 {
                    Err(Error::Config(format!("horizon {h} s is not a whole number of steps")))
                } else {
                    Ok(rounded as usize)
                }
            })
            .collect()
    }

    pub fn max_horizon_steps(&self) -> Result<usize> {
        Ok(*self.horizon_steps()?.last().expect("nonempty"))
    }

    fn upsample_factor(&self) -> Result<usize> {
        if self.step_hz == 0 || !self.iou_upsample_hz.is_multiple_of(self.step_hz) {
            return Err(Error::Config(format!(
                "upsample rate {} Hz is not a multiple of {} Hz",
                self.iou_upsample_hz, self.step_hz
            )));
        }
        Ok((self.iou_upsample_hz / self.step_hz) as usize)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_lengths(gt: &Trajectory, preds: &PredictionSet, need: usize) -> Result<()> {
    if preds.trajectories.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    if gt.len() < need {
        return Err(Error::LengthMismatch(format!(
            "ground truth has {} steps, horizon needs {need}",
            gt.len()
        )));
    }
    if let Some(short) = preds.trajectories().find(|t| t.len() < need) {
        return Err(Error::LengthMismatch(format!(
            "prediction has {} steps, horizon needs {need}",
            short.len()
        )));
    }
    Ok(())
}

/// Per-horizon minADE values (one per configured horizon).
pub fn min_ade_per_horizon(gt: &Trajectory, preds: &PredictionSet, cfg: &MetricConfig) -> Result<Vec<f64>> {
    let steps = cfg.horizon_steps()?;
    check_lengths(gt, preds, *steps.last().expect("nonempty"))?;
    Ok(steps
        .iter()
        .map(|&t| {
            preds
                .trajectories()
                .map(|p| {
                    let sum: f64 = p.points[..t]
                        .iter()
                        .zip(&gt.points[..t])
                        .map(|(a, b)| dist(*a, *b))
                        .sum();
                    sum / t as f64
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// minADE averaged over the configured horizons; the min over modes is taken
/// independently per horizon.
pub fn min_ade(gt: &Trajectory, preds: &PredictionSet, cfg: &MetricConfig) -> Result<f64> {
    let per = min_ade_per_horizon(gt, preds, cfg)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

pub fn min_fde_per_horizon(gt: &Trajectory, preds: &PredictionSet, cfg: &MetricConfig) -> Result<Vec<f64>> {
    let steps = cfg.horizon_steps()?;
    check_lengths(gt, preds, *steps.last().expect("nonempty"))?;
    Ok(steps
        .iter()
        .map(|&t| {
            preds
                .trajectories()
                .map(|p| dist(p.points[t - 1], gt.points[t - 1]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

pub fn min_fde(gt: &Trajectory, preds: &PredictionSet, cfg: &MetricConfig) -> Result<f64> {
    let per = min_fde_per_horizon(gt, preds, cfg)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Summary of paired (original, perturbed) metric values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsDeltaSummary {
    pub n: usize,
    pub mean_original: f64,
    pub mean_perturbed: f64,
    pub abs_delta_mean: f64,
    /// Population standard deviation of the per-example absolute differences.
    pub abs_delta_std: f64,
    /// `100 * abs_delta_mean / mean_original`; absent when `mean_original` is zero.
    pub relative_pct: Option<f64>,
    /// Fraction of pairs with perturbed strictly below original.
    pub fraction_improved: f64,
}

pub fn relative_pct(abs_delta_mean: f64, mean_original: f64) -> Option<f64> {
    (mean_original > 0.0).then(|| 100.0 * abs_delta_mean / mean_original)
}

pub fn abs_delta(pairs: &[(f64, f64)]) -> Result<AbsDeltaSummary> {
    if pairs.is_empty() {
        return Err(Error::Empty("metric pairs"));
    }
    if pairs
        .iter()
        .any(|&(o, p)| !o.is_finite() || !p.is_finite() || o < 0.0 || p < 0.0)
    {
        return Err(Error::Config("metric values must be finite and nonnegative".into()));
    }
    let n = pairs.len() as f64;
    let mean_original = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_perturbed = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let abs_delta_mean = pairs.iter().map(|&(o, p)| (p - o).abs()).sum::<f64>() / n;
    let var = pairs
        .iter()
        .map(|&(o, p)| ((p - o).abs() - abs_delta_mean).powi(2))
        .sum::<f64>()
        / n;
    let improved = pairs.iter().filter(|&&(o, p)| p < o).count();
    Ok(AbsDeltaSummary {
        n: pairs.len(),
        mean_original,
        mean_perturbed,
        abs_delta_mean,
        abs_delta_std: var.sqrt(),
        relative_pct: relative_pct(abs_delta_mean, mean_original),
        fraction_improved: improved as f64 / n,
    })
}

pub type Voxel = (i64, i64);

/// Linear upsampling by `factor`: each segment contributes its start point and
/// `factor - 1` interior points; the final point is appended once.
pub fn upsample(points: &[[f64; 2]], factor: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len().saturating_sub(1) * factor + 1);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push(a);
        for j in 1..factor {
            let t = j as f64 / factor as f64;
            out.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

/// Occupied voxels of the union of a set's trajectories after upsampling.
/// Probabilities are ignored.
pub fn voxelize(set: &PredictionSet, cfg: &MetricConfig) -> Result<HashSet<Voxel>> {
    if !(cfg.iou_resolution > 0.0) {
        return Err(Error::Config("iou_resolution must be positive".into()));
    }
    let factor = cfg.upsample_factor()?;
    let res = cfg.iou_resolution;
    let mut voxels = HashSet::new();
    for t in set.trajectories() {
        for p in upsample(&t.points, factor) {
            voxels.insert(((p[0] / res).floor() as i64, (p[1] / res).floor() as i64));
        }
    }
    Ok(voxels)
}

/// Voxel-set intersection over union of two prediction sets.
pub fn trajectory_set_iou(a: &PredictionSet, b: &PredictionSet, cfg: &MetricConfig) -> Result<f64> {
    if a.trajectories.is_empty() || b.trajectories.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let va = voxelize(a, cfg)?;
    let vb = voxelize(b, cfg)?;
    let inter = va.intersection(&vb).count();
    let union = va.len() + vb.len() - inter;
    if union == 0 {
        return Err(Error::Empty("trajectory points"));
    }
    Ok(inter as f64 / union as f64)
}

/// Minimum over all cross-set pairs of the mean pointwise distance.
pub fn ts_min_ade(a: &PredictionSet, b: &PredictionSet) -> Result<f64> {
    if a.trajectories.is_empty() || b.trajectories.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let len = a.trajectories[0].points.len();
    if len == 0 {
        return Err(Error::Empty("trajectory points"));
    }
    if let Some(t) = a.trajectories().chain(b.trajectories()).find(|t| t.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "trajectory of {} points vs {len}",
            t.len()
        )));
    }
    let mut best = f64::INFINITY;
    for ta in a.trajectories() {
        for tb in b.trajectories() {
            let s: f64 = ta.points.iter().zip(&tb.points).map(|(p, q)| dist(*p, *q)).sum();
            best = best.min(s / len as f64);
        }
    }
    Ok(best)
}


#[cfg(test)]
mod tests {
    use super::fixtures::set;
    use super::*;

    fn line(n: usize, f: impl Fn(usize) -> [f64; 2]) -> Vec<[f64; 2]> {
        (1..=n).map(f).collect()
    }

    #[test]
    fn identical_prediction_is_zero() {
        let gt = line(80, |t| [t as f64 * 0.3, 1.0]);
        let cfg = MetricConfig::default();
        let preds = set(vec![line(80, |_| [50.0, 50.0]), gt.clone()]);
        let gt = Trajectory::new(gt);
        assert_eq!(min_ade(&gt, &preds, &cfg).unwrap(), 0.0);
        assert_eq!(min_fde(&gt, &preds, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_is_five() {
        let gt = Trajectory::new(vec![[0.0, 0.0]; 80]);
        let preds = set(vec![vec![[3.0, 4.0]; 80]]);
        let cfg = MetricConfig::default();
        assert_eq!(min_ade_per_horizon(&gt, &preds, &cfg).unwrap(), vec![5.0; 3]);
        assert_eq!(min_ade(&gt, &preds, &cfg).unwrap(), 5.0);
        assert_eq!(min_fde(&gt, &preds, &cfg).unwrap(), 5.0);
    }

    #[test]
    fn min_is_taken_per_horizon() {
        // mode A is perfect for the first 3 s then diverges; mode B is off by 1 m throughout
        let gt = Trajectory::new(vec![[0.0, 0.0]; 80]);
        let a: Vec<[f64; 2]> = (0..80).map(|i| if i < 30 { [0.0, 0.0] } else { [10.0, 0.0] }).collect();
        let b = vec![[1.0, 0.0]; 80];
        let cfg = MetricConfig::default();
        let per = min_ade_per_horizon(&gt, &set(vec![a, b]), &cfg).unwrap();
        assert_eq!(per[0], 0.0);
        assert_eq!(per[1], 1.0);
        assert_eq!(per[2], 1.0);
    }

    #[test]
    fn short_inputs_are_rejected() {
        let cfg = MetricConfig::default();
        let gt = Trajectory::new(vec![[0.0, 0.0]; 79]);
        let preds = set(vec![vec![[0.0, 0.0]; 80]]);
        assert!(matches!(min_ade(&gt, &preds, &cfg), Err(Error::LengthMismatch(_))));
        let gt = Trajectory::new(vec![[0.0, 0.0]; 80]);
        let preds = set(vec![vec![[0.0, 0.0]; 50]]);
        assert!(matches!(min_fde(&gt, &preds, &cfg), Err(Error::LengthMismatch(_))));
        assert!(matches!(min_ade(&gt, &set(vec![]), &cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn abs_delta_hand_arithmetic() {
        let s = abs_delta(&[(0.2, 0.3), (0.4, 0.35)]).unwrap();
        assert!((s.abs_delta_mean - 0.075).abs() < 1e-12);
        assert!((s.mean_original - 0.3).abs() < 1e-12);
        assert_eq!(s.fraction_improved, 0.5);
        // |Δ| = {0.1, 0.05}: population std = 0.025
        assert!((s.abs_delta_std - 0.025).abs() < 1e-12);
        assert!((s.relative_pct.unwrap() - 25.0).abs() < 1e-9);

        let eq = abs_delta(&[(1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert_eq!(eq.abs_delta_mean, 0.0);
        assert_eq!(eq.fraction_improved, 0.0);

        assert!(matches!(abs_delta(&[]), Err(Error::Empty(_))));
        assert!(abs_delta(&[(-1.0, 0.0)]).is_err());
        assert_eq!(abs_delta(&[(0.0, 1.0)]).unwrap().relative_pct, None);
    }

    #[test]
    fn relative_pct_reference_rows() {
        assert!((relative_pct(0.141, 0.376).unwrap() - 37.5).abs() <= 0.1);
        assert!((relative_pct(0.067, 0.250).unwrap() - 26.8).abs() <= 0.1);
    }

    #[test]
    fn upsample_counts() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let up = upsample(&pts, 10);
        assert_eq!(up.len(), 21);
        assert_eq!(up[10], [1.0, 0.0]);
        assert_eq!(up[20], [1.0, 1.0]);
        assert_eq!(upsample(&[[2.0, 2.0]], 10), vec![[2.0, 2.0]]);
    }

    #[test]
    fn iou_extremes() {
        let cfg = MetricConfig::default();
        let a = set(vec![line(80, |t| [t as f64, 0.0]), line(80, |t| [t as f64, t as f64 * 0.2])]);
        assert_eq!(trajectory_set_iou(&a, &a, &cfg).unwrap(), 1.0);
        let far = set(vec![line(80, |t| [t as f64 + 1000.0, 1000.0])]);
        assert_eq!(trajectory_set_iou(&a, &far, &cfg).unwrap(), 0.0);
        assert!(trajectory_set_iou(&a, &set(vec![]), &cfg).is_err());
    }

    #[test]
    fn iou_hand_count() {
        // horizontal segment 0..1 m along y = 0.1: voxels x in {0, 1, 2} (x = 1.0 lands in voxel 2)
        // versus a point at (0.2, 0.2): voxel (0, 0)
        let cfg = MetricConfig::default();
        let a = set(vec![vec![[0.0, 0.1], [1.0, 0.1]]]);
        let b = set(vec![vec![[0.2, 0.2]]]);
        assert!((trajectory_set_iou(&a, &b, &cfg).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ts_min_ade_cases() {
        let t = line(10, |i| [i as f64, 0.0]);
        let a = set(vec![t.clone(), line(10, |_| [9.0, 9.0])]);
        let b = set(vec![line(10, |_| [-5.0, 0.0]), t]);
        assert_eq!(ts_min_ade(&a, &b).unwrap(), 0.0);
        let c = set(vec![vec![[0.0, 0.0]; 5]]);
        let d = set(vec![vec![[3.0, 4.0]; 5]]);
        assert_eq!(ts_min_ade(&c, &d).unwrap(), 5.0);
        let e = set(vec![vec![[3.0, 4.0]; 4]]);
        assert!(matches!(ts_min_ade(&c, &e), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn horizon_validation() {
        let mut cfg = MetricConfig::default();
        assert_eq!(cfg.horizon_steps().unwrap(), vec![30, 50, 80]);
        cfg.horizons = vec![5.0, 3.0];
        assert!(cfg.horizon_steps().is_err());
        cfg.horizons = vec![0.25];
        assert!(cfg.horizon_steps().is_err());
        cfg.horizons = vec![0.3, 0.5, 0.8];
        assert_eq!(cfg.horizon_steps().unwrap(), vec![3, 5, 8]);
    }
}
