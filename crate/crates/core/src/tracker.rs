//! Time-stepped multi-Bernoulli filter: predict, gate, cluster, expand,
//! enumerate globals, reduce each cluster and extract a set estimate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assoc::{
    birth_track, cluster_mbm, clusters, enumerate_globals, expand_hypotheses, gate, prune, AssocConfig,
    AssociationProblem,
};
use crate::error::{invalid_arg, Result};
use crate::gauss::{predict, LinearGaussianModel};
use crate::rfs::{cardinality_from_existence, BernoulliGaussian, GaussianMixture, IdGen, Track};
use crate::vmb::{vmb_reduce, VmbConfig};
use crate::vmmospa::{mmospa_estimate, MmospaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Track-oriented: each track collapses to one Bernoulli mixture.
    Tomb,
    VmbGaussian,
    VmbMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    NaiveMap,
    VmbRule,
    Vmmospa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub model: LinearGaussianModel,
    pub pd: f64,
    pub ps: f64,
    /// Expected false alarms per scan over the whole region.
    pub lambda_fa: f64,
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub region: [[f64; 2]; 2],
    pub assoc: AssocConfig,
    pub mode: ReductionMode,
    pub extractor: Extractor,
    /// Cutoff used by the extraction rules.
    pub c: f64,
    pub vmb: VmbConfig,
    pub mmospa: MmospaConfig,
    /// Per-track mixture size cap under the mixture-retaining modes.
    pub mixture_cap: usize,
    /// Relative weight below which mixture components are dropped.
    pub mixture_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            model: LinearGaussianModel::constant_velocity_2d(0.01, 1.0, 1.0),
            pd: 0.7,
            ps: 0.999,
            lambda_fa: 10.0,
            region: [[-100.0, 100.0], [-100.0, 100.0]],
            assoc: AssocConfig::default(),
            mode: ReductionMode::VmbGaussian,
            extractor: Extractor::VmbRule,
            c: 20.0,
            vmb: VmbConfig::default(),
            mmospa: MmospaConfig::default(),
            mixture_cap: 30,
            mixture_floor: 1e-5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, p) in [("pd", self.pd), ("ps", self.ps)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid_arg(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.lambda_fa >= 0.0) {
            return invalid_arg("lambda_fa must be nonnegative");
        }
        if !(self.area() > 0.0) {
            return invalid_arg("region must have positive area");
        }
        if !(self.c > 0.0) {
            return invalid_arg("extraction cutoff must be positive");
        }
        self.mmospa.validate()
    }

    pub fn area(&self) -> f64 {
        (self.region[0][1] - self.region[0][0]) * (self.region[1][1] - self.region[1][0])
    }

    pub fn lambda_fa_density(&self) -> f64 {
        self.lambda_fa / self.area()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub cluster_sizes: Vec<usize>,
    pub globals: Vec<usize>,
    /// Clusters whose globals came from k-best ranking rather than full enumeration.
    pub truncated_clusters: usize,
    pub lp_iterations: usize,
    pub births: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilterState {
    pub time: usize,
    pub tracks: Vec<Track>,
    pub ids: IdGen,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub state: DVector<f64>,
    pub r: f64,
}

impl FilterState {
    pub fn new() -> Self {
        Self::default()
    }
}

fn predict_track(t: &Track, ps: f64, model: &LinearGaussianModel) -> Result<Track> {
    let mut out = t.clone();
    for h in &mut out.hypotheses {
        h.bernoulli.r *= ps;
        for (_, g) in &mut h.bernoulli.density.components {
            *g = predict(g, model)?;
        }
    }
    Ok(out)
}

/// Collapses every hypothesis of a track into one Bernoulli whose density is
/// `Σ_h p(h) r_h f_h / r`.
pub fn collapse_track(t: &Track, floor: f64, cap: usize) -> Result<Track> {
    let r: f64 = t.existence();
    let mut comps = Vec::new();
    for h in &t.hypotheses {
        let wh = if r > 0.0 { h.prob * h.bernoulli.r } else { h.prob };
        if wh <= 0.0 {
            continue;
        }
        for (w, g) in &h.bernoulli.density.components {
            comps.push((wh * w, g.clone()));
        }
    }
    let mut density = GaussianMixture::from_weighted(comps)?;
    density.reduce(floor, cap);
    let hyp = t.best_hypothesis().id;
    Ok(Track::single(t.id, hyp, BernoulliGaussian { r, density }))
}

/// One filter recursion. Returns the extracted estimate.
pub fn step(state: &mut FilterState, measurements: &[DVector<f64>], config: &TrackerConfig) -> Result<Vec<EstimatePoint>> {
    let model = &config.model;
    let lambda = config.lambda_fa_density();
    let predicted: Vec<Track> =
        state.tracks.iter().map(|t| predict_track(t, config.ps, model)).collect::<Result<_>>()?;

    let problem = AssociationProblem {
        tracks: predicted,
        measurements: measurements.to_vec(),
        pd: config.pd,
        lambda_fa_density: lambda,
        gate_threshold: config.assoc.gate_threshold,
    };
    let graph = gate(&problem, model)?;
    let mut diag = StepDiagnostics::default();

    // Posterior tracks per cluster before reduction, kept for extraction.
    let mut posterior: Vec<Vec<Track>> = Vec::new();
    let mut reduced: Vec<Track> = Vec::new();
    for cluster in clusters(&graph) {
        let expanded = cluster
            .tracks
            .iter()
            .map(|&i| {
                let gated: Vec<_> = graph.gated(i).map(|k| (k, &measurements[k])).collect();
                expand_hypotheses(&problem.tracks[i], &gated, config.pd, lambda, model)
            })
            .collect::<Result<Vec<_>>>()?;
        let globals = enumerate_globals(&expanded, config.assoc.cap)?;
        diag.cluster_sizes.push(cluster.tracks.len());
        diag.globals.push(globals.selections.len());
        if !globals.exact {
            diag.truncated_clusters += 1;
        }
        let mbm = cluster_mbm(&expanded, &globals, &mut state.ids)?;
        let mbm = prune(&mbm, config.assoc.global_floor, 0.0)?;
        if mbm.tracks.is_empty() {
            continue;
        }

        match config.mode {
            ReductionMode::Tomb => {
                for t in &mbm.tracks {
                    reduced.push(collapse_track(t, config.mixture_floor, config.mixture_cap)?);
                }
            }
            ReductionMode::VmbGaussian | ReductionMode::VmbMixture => {
                let out = vmb_reduce(&mbm.tracks, &config.vmb)?;
                diag.lp_iterations += out.trace.len().saturating_sub(1);
                let comps = if config.mode == ReductionMode::VmbGaussian { out.reduced } else { out.mixtures };
                for (t, mut b) in mbm.tracks.iter().zip(comps) {
                    b.density.reduce(config.mixture_floor, config.mixture_cap);
                    let hyp = state.ids.hyp();
                    reduced.push(Track::single(t.id, hyp, b));
                }
            }
        }
        posterior.push(mbm.tracks);
    }

    // The existence floor spares tracks born this scan so that a small birth
    // intensity still gets a chance at a confirming detection.
    let floor = config.assoc.existence_floor;
    reduced.retain(|t| t.hypotheses.iter().any(|h| h.bernoulli.r >= floor));

    for k in graph.unclaimed() {
        let t = birth_track(&measurements[k], model, config.pd, lambda, &config.assoc, &mut state.ids)?;
        posterior.push(vec![t.clone()]);
        reduced.push(t);
        diag.births += 1;
    }
    state.tracks = reduced;
    state.time += 1;
    state.diagnostics = diag;

    match config.extractor {
        Extractor::NaiveMap => Ok(extract_naive(&state.tracks)),
        Extractor::VmbRule => Ok(extract_vmb_rule(&state.tracks, config.c)),
        Extractor::Vmmospa => {
            let mut out = Vec::new();
            for cluster in &posterior {
                let est = mmospa_estimate(cluster, &config.mmospa)?;
                out.extend(
                    est.slots.into_iter().filter(|(r, _)| *r >= 0.5).map(|(r, state)| EstimatePoint { state, r }),
                );
            }
            Ok(out)
        }
    }
}

/// Cardinality mode `n̂`, then the best component of the best hypothesis of
/// the `n̂` tracks with the highest existence.
pub fn extract_naive(tracks: &[Track]) -> Vec<EstimatePoint> {
    let card = cardinality_from_existence(tracks.iter().map(|t| t.existence()));
    let n_hat = card
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (n, &p)| if p > acc.1 { (n, p) } else { acc })
        .0;
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by(|&a, &b| tracks[b].existence().total_cmp(&tracks[a].existence()).then(a.cmp(&b)));
    order
        .into_iter()
        .take(n_hat)
        .map(|i| {
            let h = tracks[i].best_hypothesis();
            EstimatePoint { state: h.bernoulli.density.best_component().mean.clone(), r: tracks[i].existence() }
        })
        .collect()
}

/// Existence threshold `[1 + max(0, 1 - tr Σ / c²)]⁻¹` for the reduced rule.
pub fn vmb_rule_threshold(trace_cov: f64, c: f64) -> f64 {
    1.0 / (1.0 + (1.0 - trace_cov / (c * c)).max(0.0))
}

/// Keeps component `j` when `r̂_j` clears [`vmb_rule_threshold`]; the trace
/// is taken over the position block of the covariance.
pub fn extract_vmb_rule(tracks: &[Track], c: f64) -> Vec<EstimatePoint> {
    let mut out = Vec::new();
    for t in tracks {
        let r = t.existence();
        let g = if t.hypotheses.len() == 1 {
            t.hypotheses[0].bernoulli.moments()
        } else {
            let comps: Vec<_> = t
                .hypotheses
                .iter()
                .map(|h| (h.prob * h.bernoulli.r.max(1e-300), h.bernoulli.moments()))
                .collect();
            GaussianMixture::from_weighted(comps).map(|m| m.moments()).unwrap_or_else(|_| t.best_hypothesis().bernoulli.moments())
        };
        let pos = g.dim().min(2);
        let tr: f64 = (0..pos).map(|i| g.cov[(i, i)]).sum();
        if r >= vmb_rule_threshold(tr, c) {
            out.push(EstimatePoint { state: g.mean, r });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{update, Gaussian};
    use approx::assert_relative_eq;

    fn bern(r: f64, x: f64, y: f64, var: f64) -> BernoulliGaussian {
        BernoulliGaussian::gaussian(r, Gaussian::from_slices(&[x, y, 0.0, 0.0], &[var, var, 1.0, 1.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn empty_in_empty_out() {
        let mut st = FilterState::new();
        let est = step(&mut st, &[], &TrackerConfig::default()).unwrap();
        assert!(est.is_empty());
        assert!(st.tracks.is_empty());
    }

    #[test]
    fn naive_examples() {
        let mut ids = IdGen::new();
        let t = Track::single(ids.track(), ids.hyp(), bern(0.9, 1.0, 2.0, 1.0));
        let est = extract_naive(std::slice::from_ref(&t));
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].state[0], 1.0);
        let t2 = Track::single(ids.track(), ids.hyp(), bern(0.2, 5.0, 5.0, 1.0));
        assert_eq!(extract_naive(&[t2, t]).len(), 1);
    }

    #[test]
    fn vmb_rule_thresholds() {
        assert_eq!(vmb_rule_threshold(400.0, 20.0), 1.0);
        assert_eq!(vmb_rule_threshold(500.0, 20.0), 1.0);
        assert_eq!(vmb_rule_threshold(0.0, 20.0), 0.5);
        assert_relative_eq!(vmb_rule_threshold(200.0, 20.0), 2.0 / 3.0);
    }

    #[test]
    fn single_hypothesis_tomb_is_a_kalman_filter() {
        let cfg = TrackerConfig {
            pd: 1.0,
            ps: 1.0,
            lambda_fa: 1e-6,
            mode: ReductionMode::Tomb,
            extractor: Extractor::NaiveMap,
            ..Default::default()
        };
        let mut ids = IdGen::new();
        let prior = Gaussian::from_slices(&[0.0, 0.0, 1.0, 0.5], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut st = FilterState::new();
        st.tracks = vec![Track::single(ids.track(), ids.hyp(), BernoulliGaussian::gaussian(1.0, prior.clone()).unwrap())];
        st.ids = ids;
        let mut kf = prior;
        for t in 1..20 {
            let z = DVector::from_vec(vec![t as f64 + 0.3 * (t as f64).sin(), 0.5 * t as f64]);
            let est = step(&mut st, std::slice::from_ref(&z), &cfg).unwrap();
            kf = update(&predict(&kf, &cfg.model).unwrap(), &z, &cfg.model).unwrap().0;
            assert_eq!(est.len(), 1);
            assert_relative_eq!(est[0].state, kf.mean, epsilon = 1e-12);
            assert_eq!(st.tracks.len(), 1);
        }
    }

    #[test]
    fn unclaimed_measurements_spawn_tracks() {
        let mut st = FilterState::new();
        let cfg = TrackerConfig::default();
        let zs = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![50.0, 50.0])];
        step(&mut st, &zs, &cfg).unwrap();
        assert_eq!(st.tracks.len(), 2);
        assert_eq!(st.diagnostics.births, 2);
    }

    #[test]
    fn collapse_preserves_existence() {
        let mut ids = IdGen::new();
        let mut t = Track::single(ids.track(), ids.hyp(), bern(0.4, 0.0, 0.0, 1.0));
        t.hypotheses[0].prob = 0.5;
        t.hypotheses.push(crate::rfs::Hypothesis { id: ids.hyp(), bernoulli: bern(1.0, 3.0, 0.0, 1.0), prob: 0.5 });
        let c = collapse_track(&t, 0.0, 10).unwrap();
        assert_relative_eq!(c.existence(), 0.7);
        assert_eq!(c.hypotheses[0].bernoulli.density.len(), 2);
        assert_relative_eq!(c.hypotheses[0].bernoulli.density.components[0].0, 0.2 / 0.7);
    }
}
