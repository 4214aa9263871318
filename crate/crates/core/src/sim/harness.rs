//! Monte Carlo harness: shared trials, several estimators, per-step mean OSPA.

use std::io::Write;

use log::{info, warn};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{generate_trial, ScenarioConfig, Trial};
use crate::error::{Error, Result};
use crate::ospa::{ospa, OspaParams};
use crate::tracker::{step, EstimatePoint, FilterState, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    Tracker { config: Box<TrackerConfig> },
    /// Returns the true target states; used to calibrate the harness.
    TruthOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    pub kind: EstimatorKind,
}

impl EstimatorSpec {
    pub fn tracker(name: impl Into<String>, config: TrackerConfig) -> Self {
        Self { name: name.into(), kind: EstimatorKind::Tracker { config: Box::new(config) } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    pub tracker: String,
    pub mean_ospa: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    /// Failed trials per estimator, in estimator order.
    pub failures: Vec<(String, usize)>,
    pub trials: usize,
}

impl MetricTable {
    /// Mean of the per-step means over `t ∈ [from, to]`.
    pub fn window_mean(&self, tracker: &str, from: usize, to: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.tracker == tracker && r.t >= from && r.t <= to)
            .map(|r| r.mean_ospa)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,tracker,mean_ospa,stderr")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:.9},{:.9}", r.t, r.tracker, r.mean_ospa, r.stderr)?;
        }
        Ok(())
    }
}

/// Runner options. `threads = None` reads `COALESCE_THREADS`, falling back
/// to rayon's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub n_trials: usize,
    pub threads: Option<usize>,
    pub ospa: OspaParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            n_trials: 50,
            threads: None,
            ospa: OspaParams { p: 1.0, c: 20.0, mask: Some(vec![0, 1]) },
        }
    }
}

/// RNG of trial `index` under master seed `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_trials(scenario: &ScenarioConfig, n_trials: usize) -> Result<Vec<Trial>> {
    (0..n_trials as u64).map(|i| generate_trial(scenario, i, &mut trial_rng(scenario.seed, i))).collect()
}

/// Runs one estimator over one trial, returning the estimate stream.
pub fn run_estimator(kind: &EstimatorKind, trial: &Trial) -> Result<Vec<Vec<EstimatePoint>>> {
    match kind {
        EstimatorKind::TruthOracle => Ok((0..trial.measurements.len())
            .map(|t| trial.truth_at(t).into_iter().map(|state| EstimatePoint { state, r: 1.0 }).collect())
            .collect()),
        EstimatorKind::Tracker { config } => {
            config.validate()?;
            let mut st = FilterState::new();
            trial.measurements.iter().map(|zs| step(&mut st, zs, config)).collect()
        }
    }
}

fn trial_ospa(kind: &EstimatorKind, trial: &Trial, params: &OspaParams) -> Result<Vec<f64>> {
    let stream = run_estimator(kind, trial)?;
    stream
        .iter()
        .enumerate()
        .map(|(t, est)| {
            let xs: Vec<DVector<f64>> = est.iter().map(|e| e.state.clone()).collect();
            ospa(&trial.truth_at(t), &xs, params)
        })
        .collect()
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = threads
        .or_else(|| std::env::var("COALESCE_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::InvalidState(e.to_string()))
}

/// Every estimator sees the same trials. Aggregation runs in trial order
/// so results do not depend on the thread count.
pub fn run_monte_carlo(
    scenario: &ScenarioConfig,
    estimators: &[EstimatorSpec],
    options: &RunOptions,
) -> Result<MetricTable> {
    scenario.validate()?;
    options.ospa.validate()?;
    let trials = generate_trials(scenario, options.n_trials)?;
    let per_trial: Vec<Vec<Result<Vec<f64>>>> = pool(options.threads)?.install(|| {
        trials
            .par_iter()
            .map(|trial| estimators.iter().map(|e| trial_ospa(&e.kind, trial, &options.ospa)).collect())
            .collect()
    });
    info!("finished {} trials for {} estimators", trials.len(), estimators.len());
    Ok(aggregate(&per_trial, estimators, scenario.horizon, trials.len()))
}

fn aggregate(
    per_trial: &[Vec<Result<Vec<f64>>>],
    estimators: &[EstimatorSpec],
    horizon: usize,
    n_trials: usize,
) -> MetricTable {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (e, spec) in estimators.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = per_trial
            .iter()
            .enumerate()
            .filter_map(|(i, r)| match &r[e] {
                Ok(v) => Some(v),
                Err(err) => {
                    warn!("trial {i} failed for {}: {err}", spec.name);
                    None
                }
            })
            .collect();
        failures.push((spec.name.clone(), per_trial.len() - ok.len()));
        for t in 0..horizon {
            let n = ok.len() as f64;
            let (mean, stderr) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let mean = ok.iter().map(|v| v[t]).sum::<f64>() / n;
                let var = if ok.len() > 1 {
                    ok.iter().map(|v| (v[t] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, (var / n).sqrt())
            };
            rows.push(MetricRow { t, tracker: spec.name.clone(), mean_ospa: mean, stderr });
        }
    }
    MetricTable { rows, failures, trials: n_trials }
}

/// CSV columns `time,estimate_id,x,y,vx,vy,r`.
pub fn write_estimates_csv<W: Write>(stream: &[Vec<EstimatePoint>], mut w: W) -> Result<()> {
    writeln!(w, "time,estimate_id,x,y,vx,vy,r")?;
    for (t, est) in stream.iter().enumerate() {
        for (k, e) in est.iter().enumerate() {
            let s = |i: usize| e.state.get(i).copied().unwrap_or(f64::NAN);
            writeln!(w, "{t},{k},{:.9},{:.9},{:.9},{:.9},{:.9}", s(0), s(1), s(2), s(3), e.r)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_targets_no_clutter_is_zero() {
        let scenario = ScenarioConfig { n_targets: 0, lambda_fa: 0.0, horizon: 20, midpoint: 10, ..Default::default() };
        let est = [EstimatorSpec::tracker("vmb-g", TrackerConfig::default())];
        let opts = RunOptions { n_trials: 3, threads: Some(1), ..Default::default() };
        let table = run_monte_carlo(&scenario, &est, &opts).unwrap();
        assert!(table.rows.iter().all(|r| r.mean_ospa == 0.0));
    }

    #[test]
    fn truth_oracle_scores_zero() {
        let scenario = ScenarioConfig { horizon: 30, midpoint: 15, ..Default::default() };
        let est = [EstimatorSpec { name: "oracle".into(), kind: EstimatorKind::TruthOracle }];
        let opts = RunOptions { n_trials: 4, threads: Some(2), ..Default::default() };
        let table = run_monte_carlo(&scenario, &est, &opts).unwrap();
        assert_eq!(table.rows.len(), 30);
        assert!(table.rows.iter().all(|r| r.mean_ospa == 0.0));
        assert_eq!(table.failures, vec![("oracle".to_string(), 0)]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let scenario = ScenarioConfig { horizon: 15, midpoint: 7, seed: 9, ..Default::default() };
        let est = [EstimatorSpec::tracker("tomb", TrackerConfig {
            mode: crate::tracker::ReductionMode::Tomb,
            extractor: crate::tracker::Extractor::NaiveMap,
            ..Default::default()
        })];
        let a = run_monte_carlo(&scenario, &est, &RunOptions { n_trials: 3, threads: Some(1), ..Default::default() });
        let b = run_monte_carlo(&scenario, &est, &RunOptions { n_trials: 3, threads: Some(3), ..Default::default() });
        assert_eq!(a.unwrap(), b.unwrap());
    }
}
