//! Scenario generation: targets that meet near the origin at the midpoint,
//! obtained by drawing the midpoint state and running the dynamics forward
//! and backward from there.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::gauss::{cholesky, LinearGaussianModel};
use crate::tracker::{Extractor, ReductionMode, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// 1: midpoint states ~ N(0, 1e-6 I), all targets alive throughout.
    /// 2: midpoint states ~ N(0, 0.25 I), target `i` born at `min(10 i, midpoint)`.
    pub case: u8,
    pub n_targets: usize,
    pub pd: f64,
    pub lambda_fa: f64,
    /// Number of scans, times `0..horizon`.
    pub horizon: usize,
    pub midpoint: usize,
    pub region: [[f64; 2]; 2],
    pub q: f64,
    pub dt: f64,
    pub meas_var: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            case: 1,
            n_targets: 6,
            pd: 0.7,
            lambda_fa: 10.0,
            horizon: 201,
            midpoint: 100,
            region: [[-100.0, 100.0], [-100.0, 100.0]],
            q: 0.01,
            dt: 1.0,
            meas_var: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.case != 1 && self.case != 2 {
            return invalid_arg(format!("unknown scenario case {}", self.case));
        }
        if !(0.0..=1.0).contains(&self.pd) {
            return invalid_arg("pd outside [0, 1]");
        }
        if !(self.lambda_fa >= 0.0 && self.lambda_fa.is_finite()) {
            return invalid_arg("lambda_fa must be a nonnegative number");
        }
        if self.midpoint >= self.horizon {
            return invalid_arg("midpoint must fall inside the horizon");
        }
        if self.region[0][1] <= self.region[0][0] || self.region[1][1] <= self.region[1][0] {
            return invalid_arg("empty region");
        }
        Ok(())
    }

    /// True when every parameter lies on the standard experiment grids.
    pub fn on_standard_grid(&self) -> bool {
        [6, 10, 20].contains(&self.n_targets)
            && [0.3, 0.5, 0.7, 0.98].contains(&self.pd)
            && [10.0, 40.0, 80.0].contains(&self.lambda_fa)
    }

    pub fn model(&self) -> LinearGaussianModel {
        LinearGaussianModel::constant_velocity_2d(self.q, self.dt, self.meas_var)
    }

    pub fn midpoint_var(&self) -> f64 {
        if self.case == 1 {
            1e-6
        } else {
            0.25
        }
    }

    pub fn birth_time(&self, target: usize) -> usize {
        match self.case {
            1 => 0,
            _ => (10 * target).min(self.midpoint),
        }
    }

    /// Tracker defaults with the sensor, clutter and motion model of this scenario.
    pub fn tracker_config(&self, mode: ReductionMode, extractor: Extractor) -> TrackerConfig {
        TrackerConfig {
            model: self.model(),
            pd: self.pd,
            lambda_fa: self.lambda_fa,
            region: self.region,
            mode,
            extractor,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub birth: usize,
    /// `states[k]` is the state at time `birth + k`; the target lives to the end.
    pub states: Vec<DVector<f64>>,
}

impl TargetTruth {
    pub fn at(&self, t: usize) -> Option<&DVector<f64>> {
        t.checked_sub(self.birth).and_then(|k| self.states.get(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: u64,
    pub truth: Vec<TargetTruth>,
    pub measurements: Vec<Vec<DVector<f64>>>,
}

impl Trial {
    pub fn truth_at(&self, t: usize) -> Vec<DVector<f64>> {
        self.truth.iter().filter_map(|x| x.at(t).cloned()).collect()
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Lower Cholesky factor, or zero for an all-zero covariance.
fn sqrt_cov(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(m.clone());
    }
    Ok(cholesky(m)?.l())
}

/// Generates one trial from `rng`.
pub fn generate_trial(config: &ScenarioConfig, index: u64, rng: &mut ChaCha8Rng) -> Result<Trial> {
    config.validate()?;
    let model = config.model();
    let d = model.state_dim();
    let f_inv = model
        .f
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("transition matrix is singular".into()))?;
    let lq = sqrt_cov(&model.q)?;
    let lr = sqrt_cov(&model.r)?;
    let mid_sd = config.midpoint_var().sqrt();

    let mut truth = Vec::with_capacity(config.n_targets);
    for i in 0..config.n_targets {
        let mid = gaussian_vec(rng, d) * mid_sd;
        let birth = config.birth_time(i);
        let mut back = Vec::with_capacity(config.midpoint - birth);
        let mut x = mid.clone();
        for _ in birth..config.midpoint {
            x = &f_inv * (&x - &lq * gaussian_vec(rng, d));
            back.push(x.clone());
        }
        back.reverse();
        let mut states = back;
        states.push(mid.clone());
        let mut x = mid;
        for _ in config.midpoint + 1..config.horizon {
            x = &model.f * &x + &lq * gaussian_vec(rng, d);
            states.push(x.clone());
        }
        truth.push(TargetTruth { birth, states });
    }

    let clutter = if config.lambda_fa > 0.0 {
        Some(Poisson::new(config.lambda_fa).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let m = model.meas_dim();
    let mut measurements = Vec::with_capacity(config.horizon);
    for t in 0..config.horizon {
        let mut zs = Vec::new();
        for target in &truth {
            if let Some(x) = target.at(t) {
                if rng.random::<f64>() < config.pd {
                    zs.push(&model.h * x + &lr * gaussian_vec(rng, m));
                }
            }
        }
        if let Some(p) = &clutter {
            let n = p.sample(rng) as usize;
            for _ in 0..n {
                let x = rng.random_range(config.region[0][0]..config.region[0][1]);
                let y = rng.random_range(config.region[1][0]..config.region[1][1]);
                zs.push(DVector::from_vec(vec![x, y]));
            }
        }
        // Hide which measurements are detections.
        zs.shuffle(rng);
        measurements.push(zs);
    }
    Ok(Trial { index, truth, measurements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn case1_midpoints_are_tight() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trial = generate_trial(&cfg, 0, &mut rng).unwrap();
        let mids = trial.truth_at(cfg.midpoint);
        assert_eq!(mids.len(), 6);
        for a in &mids {
            for b in &mids {
                assert!((a - b).norm() <= 1e-2);
            }
        }
        assert!(trial.truth.iter().all(|t| t.birth == 0 && t.states.len() == cfg.horizon));
    }

    #[test]
    fn perfect_sensor_sees_every_target() {
        let cfg = ScenarioConfig { pd: 1.0, lambda_fa: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trial = generate_trial(&cfg, 0, &mut rng).unwrap();
        assert!(trial.measurements.iter().all(|zs| zs.len() == 6));
    }

    #[test]
    fn case2_births() {
        let cfg = ScenarioConfig { case: 2, n_targets: 20, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trial = generate_trial(&cfg, 0, &mut rng).unwrap();
        assert_eq!(trial.truth.iter().filter(|t| t.birth == 100).count(), 10);
        assert_eq!(trial.truth[3].birth, 30);
        assert_eq!(trial.truth_at(29).len(), 3);
    }

    #[test]
    fn backward_dynamics_invert_forward() {
        let cfg = ScenarioConfig { q: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trial = generate_trial(&cfg, 0, &mut rng).unwrap();
        let model = cfg.model();
        let s = &trial.truth[0].states;
        for t in 1..s.len() {
            assert!((&model.f * &s[t - 1] - &s[t]).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = ScenarioConfig { case: 3, ..Default::default() };
        assert!(generate_trial(&bad, 0, &mut rng).is_err());
        let bad = ScenarioConfig { midpoint: 300, ..Default::default() };
        assert!(generate_trial(&bad, 0, &mut rng).is_err());
    }
}
