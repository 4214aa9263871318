//! Merging command-line flags with an optional JSON config file.

use std::path::{Path, PathBuf};

use coalesce::sim::{EstimatorSpec, ScenarioConfig};
use coalesce::tracker::{Extractor, ReductionMode, TrackerConfig};
use serde::Deserialize;
use serde_json::Value;

use crate::args::{ExtractorArg, RunArgs, TrackerArg, TrackerArgs};
use crate::error::CliError;

/// Everything a config file may set. Fields left out keep the flag values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<u8>,
    pub n_targets: Option<usize>,
    pub pd: Option<f64>,
    pub lambda_fa: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p: Option<f64>,
    pub c: Option<f64>,
    /// Extra scenario fields such as `horizon` or `region`.
    #[serde(default)]
    pub scenario: Option<Value>,
    /// Merged into every tracker configuration, e.g. `{"assoc": {"cap": 500}}`.
    #[serde(default)]
    pub tracker: Option<Value>,
}

pub fn load(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub trials: usize,
    pub out: PathBuf,
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub tracker_patch: Option<Value>,
}

pub fn resolve(args: &RunArgs) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(p) => load(p)?,
        None => FileConfig::default(),
    };
    let mut scenario = serde_json::to_value(ScenarioConfig {
        case: file.case.unwrap_or(args.case),
        n_targets: file.n_targets.unwrap_or(args.n_targets),
        pd: file.pd.unwrap_or(args.pd),
        lambda_fa: file.lambda_fa.unwrap_or(args.lambda_fa),
        seed: file.seed.unwrap_or(args.seed),
        ..Default::default()
    })
    .expect("scenario serializes");
    if let Some(patch) = &file.scenario {
        merge(&mut scenario, patch);
    }
    let scenario: ScenarioConfig =
        serde_json::from_value(scenario).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if !scenario.on_standard_grid() {
        log::info!("scenario parameters are off the standard experiment grids");
    }
    Ok(Resolved {
        scenario,
        trials: file.trials.unwrap_or(args.trials),
        out: file.out.unwrap_or_else(|| args.out.clone()),
        p: file.p,
        c: file.c,
        tracker_patch: file.tracker,
    })
}

impl Resolved {
    /// One estimator per requested tracker, named `tracker` or
    /// `tracker+extractor` when the extractor is not the default one.
    pub fn estimators(&self, args: &TrackerArgs) -> Result<Vec<EstimatorSpec>, CliError> {
        args.trackers
            .iter()
            .map(|&t| {
                let (mode, default) = match t {
                    TrackerArg::Tomb => (ReductionMode::Tomb, ExtractorArg::Naive),
                    TrackerArg::VmbG => (ReductionMode::VmbGaussian, ExtractorArg::VmbRule),
                    TrackerArg::VmbMix => (ReductionMode::VmbMixture, ExtractorArg::VmbRule),
                };
                let ex = args.extractor.unwrap_or(default);
                let extractor = match ex {
                    ExtractorArg::Naive => Extractor::NaiveMap,
                    ExtractorArg::VmbRule => Extractor::VmbRule,
                    ExtractorArg::Vmmospa => Extractor::Vmmospa,
                };
                let mut name = tracker_name(t).to_string();
                if ex != default {
                    name = format!("{name}+{}", extractor_name(ex));
                }
                Ok(EstimatorSpec::tracker(name, self.tracker_config(mode, extractor)?))
            })
            .collect()
    }

    fn tracker_config(&self, mode: ReductionMode, extractor: Extractor) -> Result<TrackerConfig, CliError> {
        let base = self.scenario.tracker_config(mode, extractor);
        let cfg = match &self.tracker_patch {
            None => base,
            Some(patch) => {
                let mut v = serde_json::to_value(base).expect("tracker config serializes");
                merge(&mut v, patch);
                serde_json::from_value(v).map_err(|e| CliError::Config(format!("tracker: {e}")))?
            }
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn tracker_name(t: TrackerArg) -> &'static str {
    match t {
        TrackerArg::Tomb => "tomb",
        TrackerArg::VmbG => "vmb-g",
        TrackerArg::VmbMix => "vmb-mix",
    }
}

fn extractor_name(e: ExtractorArg) -> &'static str {
    match e {
        ExtractorArg::Naive => "naive",
        ExtractorArg::VmbRule => "vmb-rule",
        ExtractorArg::Vmmospa => "vmmospa",
    }
}

/// Recursive object merge; non-object values in `patch` replace those in `base`.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}
