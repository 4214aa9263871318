//! Data association: gating, single-target hypothesis expansion, global
//! hypothesis enumeration (exact or Murty k-best), clustering and pruning.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_state, Result};
use crate::gauss::{update, Gaussian, LinearGaussianModel};
use crate::rfs::{
    BernoulliGaussian, GaussianMixture, GlobalHypothesis, HypId, Hypothesis, IdGen, MultiBernoulliMixture, Track,
};
use crate::transport::hungarian;

/// Tunables for association. None of these are fixed by the method itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssocConfig {
    /// Squared Mahalanobis gate.
    pub gate_threshold: f64,
    /// Maximum number of global hypotheses kept per cluster.
    pub cap: usize,
    /// Birth intensity per unit area per scan.
    pub birth_intensity: f64,
    /// Prior variance of each velocity coordinate for a newborn track.
    pub birth_velocity_var: f64,
    /// Globals below this weight are dropped.
    pub global_floor: f64,
    /// Tracks whose best hypothesis existence falls below this are deleted.
    pub existence_floor: f64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            gate_threshold: 16.0,
            cap: 2000,
            birth_intensity: 2e-5,
            birth_velocity_var: 1.0,
            global_floor: 1e-6,
            existence_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssociationProblem {
    pub tracks: Vec<Track>,
    pub measurements: Vec<DVector<f64>>,
    pub pd: f64,
    /// False alarms per unit area.
    pub lambda_fa_density: f64,
    pub gate_threshold: f64,
}

impl AssociationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pd) {
            return invalid_arg(format!("detection probability {} outside [0, 1]", self.pd));
        }
        if !(self.lambda_fa_density >= 0.0) {
            return invalid_arg("false-alarm density must be nonnegative");
        }
        Ok(())
    }
}

/// `edges[i][k]` is true when measurement `k` falls in track `i`'s gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatingGraph {
    pub edges: Vec<Vec<bool>>,
    pub n_measurements: usize,
}

impl GatingGraph {
    pub fn gated(&self, track: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[track].iter().enumerate().filter(|(_, &e)| e).map(|(k, _)| k)
    }

    /// Measurements not gated by any track.
    pub fn unclaimed(&self) -> Vec<usize> {
        (0..self.n_measurements).filter(|&k| !self.edges.iter().any(|row| row[k])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub tracks: Vec<usize>,
    pub measurements: Vec<usize>,
}

/// A child hypothesis produced by the measurement update of one track.
#[derive(Debug, Clone)]
pub struct Child {
    pub bernoulli: BernoulliGaussian,
    /// Unnormalized log weight, `-inf` for impossible children.
    pub log_weight: f64,
    /// Index into the problem's measurement list, `None` for a miss.
    pub measurement: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExpandedTrack {
    pub track: Track,
    pub children: Vec<Child>,
}

/// Global hypotheses of one cluster as child indices per track.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGlobals {
    pub selections: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// True when every feasible global was enumerated.
    pub exact: bool,
}

pub fn gate(problem: &AssociationProblem, model: &LinearGaussianModel) -> Result<GatingGraph> {
    problem.validate()?;
    let mut edges = Vec::with_capacity(problem.tracks.len());
    for track in &problem.tracks {
        let mut innovations = Vec::new();
        for h in &track.hypotheses {
            for (_, g) in &h.bernoulli.density.components {
                innovations.push(g.predicted_measurement(model)?);
            }
        }
        let mut row = Vec::with_capacity(problem.measurements.len());
        for z in &problem.measurements {
            let mut hit = false;
            for s in &innovations {
                if s.mahalanobis_sq(z)? <= problem.gate_threshold {
                    hit = true;
                    break;
                }
            }
            row.push(hit);
        }
        edges.push(row);
    }
    Ok(GatingGraph { edges, n_measurements: problem.measurements.len() })
}

/// Connected components of the gating graph. Every track lands in exactly
/// one cluster; measurements outside every gate belong to none.
pub fn clusters(graph: &GatingGraph) -> Vec<Cluster> {
    let n_t = graph.edges.len();
    let n = n_t + graph.n_measurements;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, row) in graph.edges.iter().enumerate() {
        for (k, &e) in row.iter().enumerate() {
            if e {
                let a = find(&mut parent, i);
                let b = find(&mut parent, n_t + k);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut by_root: BTreeMap<usize, Cluster> = BTreeMap::new();
    for i in 0..n_t {
        let root = find(&mut parent, i);
        by_root.entry(root).or_insert_with(|| Cluster { tracks: vec![], measurements: vec![] }).tracks.push(i);
    }
    for k in 0..graph.n_measurements {
        let root = find(&mut parent, n_t + k);
        if let Some(c) = by_root.get_mut(&root) {
            c.measurements.push(k);
        }
    }
    by_root.into_values().collect()
}

/// Measurement update of every hypothesis of `track` against the gated
/// measurements: one missed-detection child per hypothesis plus one
/// detection child per (hypothesis, measurement) pair with nonzero weight.
pub fn expand_hypotheses(
    track: &Track,
    gated: &[(usize, &DVector<f64>)],
    pd: f64,
    lambda_fa_density: f64,
    model: &LinearGaussianModel,
) -> Result<ExpandedTrack> {
    if !(0.0..=1.0).contains(&pd) {
        return invalid_arg(format!("detection probability {pd} outside [0, 1]"));
    }
    let mut children = Vec::new();
    for parent in &track.hypotheses {
        if parent.prob <= 0.0 {
            continue;
        }
        let log_prior = parent.prob.ln();
        let r = parent.bernoulli.r;
        let miss_mass = 1.0 - r * pd;
        let r_miss = if miss_mass > 0.0 { (r * (1.0 - pd) / miss_mass).clamp(0.0, 1.0) } else { 0.0 };
        children.push(Child {
            bernoulli: BernoulliGaussian { r: r_miss, density: parent.bernoulli.density.clone() },
            log_weight: log_prior + miss_mass.ln(),
            measurement: None,
        });
        if r * pd <= 0.0 {
            continue;
        }
        for &(k, z) in gated {
            let mut comps = Vec::with_capacity(parent.bernoulli.density.len());
            let mut log_terms = Vec::with_capacity(parent.bernoulli.density.len());
            for (w, g) in &parent.bernoulli.density.components {
                if *w <= 0.0 {
                    continue;
                }
                let (post, ll) = update(g, z, model)?;
                log_terms.push(w.ln() + ll);
                comps.push(post);
            }
            let log_lik = log_sum_exp(&log_terms);
            if !log_lik.is_finite() {
                continue;
            }
            let weights = log_terms.iter().map(|l| (l - log_lik).exp());
            let density = GaussianMixture { components: weights.zip(comps).collect() };
            let log_weight = log_prior + (r * pd).ln() + log_lik - lambda_fa_density.ln();
            children.push(Child { bernoulli: BernoulliGaussian { r: 1.0, density }, log_weight, measurement: Some(k) });
        }
    }
    Ok(ExpandedTrack { track: track.clone(), children })
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Feasible globals pick one child per track with no measurement used twice.
/// If at most `cap` exist they are all returned, otherwise the `cap` most
/// likely ones found by Murty's ranking. Weights are normalized.
pub fn enumerate_globals(tracks: &[ExpandedTrack], cap: usize) -> Result<RankedGlobals> {
    if cap < 1 {
        return invalid_arg("global hypothesis cap must be at least 1");
    }
    let mut scored: Vec<(f64, Vec<usize>)>;
    let exact = count_feasible(tracks, cap + 1) <= cap;
    if exact {
        scored = Vec::new();
        let mut cur = Vec::with_capacity(tracks.len());
        let mut used = HashSet::new();
        enumerate_rec(tracks, &mut cur, &mut used, 0.0, &mut scored);
    } else {
        scored = murty(tracks, cap);
    }
    if scored.is_empty() {
        return invalid_state("cluster has no feasible global hypothesis");
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let logs: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let norm = log_sum_exp(&logs);
    let weights = logs.iter().map(|l| (l - norm).exp()).collect();
    let selections = scored.into_iter().map(|s| s.1).collect();
    Ok(RankedGlobals { selections, weights, exact })
}

fn count_feasible(tracks: &[ExpandedTrack], limit: usize) -> usize {
    fn rec(tracks: &[ExpandedTrack], i: usize, used: &mut HashSet<usize>, limit: usize, count: &mut usize) {
        if *count >= limit {
            return;
        }
        if i == tracks.len() {
            *count += 1;
            return;
        }
        for c in &tracks[i].children {
            if c.log_weight == f64::NEG_INFINITY {
                continue;
            }
            match c.measurement {
                Some(k) if used.contains(&k) => continue,
                Some(k) => {
                    used.insert(k);
                    rec(tracks, i + 1, used, limit, count);
                    used.remove(&k);
                }
                None => rec(tracks, i + 1, used, limit, count),
            }
        }
    }
    let mut count = 0;
    rec(tracks, 0, &mut HashSet::new(), limit, &mut count);
    count
}

fn enumerate_rec(
    tracks: &[ExpandedTrack],
    cur: &mut Vec<usize>,
    used: &mut HashSet<usize>,
    acc: f64,
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    let i = cur.len();
    if i == tracks.len() {
        out.push((acc, cur.clone()));
        return;
    }
    for (ci, c) in tracks[i].children.iter().enumerate() {
        if c.log_weight == f64::NEG_INFINITY {
            continue;
        }
        if let Some(k) = c.measurement {
            if !used.insert(k) {
                continue;
            }
        }
        cur.push(ci);
        enumerate_rec(tracks, cur, used, acc + c.log_weight, out);
        cur.pop();
        if let Some(k) = c.measurement {
            used.remove(&k);
        }
    }
}

#[derive(Debug, Clone)]
struct MurtyNode {
    cost: DMatrix<f64>,
    perm: Vec<usize>,
    value: f64,
}

impl PartialEq for MurtyNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for MurtyNode {}
impl PartialOrd for MurtyNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MurtyNode {
    // Max-heap: cheapest first, then lexicographically smallest assignment.
    fn cmp(&self, other: &Self) -> Ordering {
        other.value.total_cmp(&self.value).then_with(|| other.perm.cmp(&self.perm))
    }
}

fn solve_node(cost: DMatrix<f64>) -> Option<MurtyNode> {
    let perm = hungarian(cost.nrows(), cost.ncols(), |i, j| cost[(i, j)])?;
    let value: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    value.is_finite().then_some(MurtyNode { cost, perm, value })
}

/// k-best ranking on a tracks x (measurements + one miss column per track)
/// matrix. When a track carries several parent hypotheses each cell uses
/// its most likely child.
fn murty(tracks: &[ExpandedTrack], k: usize) -> Vec<(f64, Vec<usize>)> {
    let mut meas: Vec<usize> =
        tracks.iter().flat_map(|t| t.children.iter().filter_map(|c| c.measurement)).collect();
    meas.sort_unstable();
    meas.dedup();
    let col_of: HashMap<usize, usize> = meas.iter().enumerate().map(|(c, &m)| (m, c)).collect();
    let n = tracks.len();
    let m = meas.len();
    let mut cost = DMatrix::from_element(n, m + n, f64::INFINITY);
    let mut child_at = vec![vec![usize::MAX; m + n]; n];
    for (i, t) in tracks.iter().enumerate() {
        for (ci, c) in t.children.iter().enumerate() {
            let col = match c.measurement {
                Some(z) => col_of[&z],
                None => m + i,
            };
            let cst = -c.log_weight;
            if cst < cost[(i, col)] {
                cost[(i, col)] = cst;
                child_at[i][col] = ci;
            }
        }
    }

    let mut out = Vec::new();
    let mut heap = BinaryHeap::new();
    if let Some(root) = solve_node(cost) {
        heap.push(root);
    }
    while let Some(node) = heap.pop() {
        let selection: Vec<usize> = node.perm.iter().enumerate().map(|(i, &c)| child_at[i][c]).collect();
        out.push((-node.value, selection));
        if out.len() >= k {
            break;
        }
        let mut base = node.cost.clone();
        for i in 0..n {
            let mut child = base.clone();
            child[(i, node.perm[i])] = f64::INFINITY;
            if let Some(s) = solve_node(child) {
                heap.push(s);
            }
            // Force row i onto its current column for the following subproblems.
            let keep = node.perm[i];
            for c in 0..base.ncols() {
                if c != keep {
                    base[(i, c)] = f64::INFINITY;
                }
            }
            for r in 0..n {
                if r != i {
                    base[(r, keep)] = f64::INFINITY;
                }
            }
        }
    }
    out
}

/// Builds the cluster's multi-Bernoulli mixture from ranked globals. Child
/// hypotheses that no global selects are dropped.
pub fn cluster_mbm(tracks: &[ExpandedTrack], globals: &RankedGlobals, ids: &mut IdGen) -> Result<MultiBernoulliMixture> {
    let mut hyp_ids: Vec<HashMap<usize, HypId>> = vec![HashMap::new(); tracks.len()];
    let mut out_tracks: Vec<Track> =
        tracks.iter().map(|t| Track { id: t.track.id, hypotheses: Vec::new() }).collect();
    let mut out_globals = Vec::with_capacity(globals.selections.len());
    for (sel, &w) in globals.selections.iter().zip(&globals.weights) {
        let mut selection = Vec::with_capacity(sel.len());
        for (i, &ci) in sel.iter().enumerate() {
            let id = *hyp_ids[i].entry(ci).or_insert_with(|| {
                let id = ids.hyp();
                out_tracks[i].hypotheses.push(Hypothesis {
                    id,
                    bernoulli: tracks[i].children[ci].bernoulli.clone(),
                    prob: 0.0,
                });
                id
            });
            selection.push(id);
        }
        out_globals.push(GlobalHypothesis { selection, weight: w });
    }
    MultiBernoulliMixture { tracks: out_tracks, globals: out_globals }.marginals_from_globals()
}

/// Drops globals lighter than `global_floor` (renormalizing the rest) and
/// tracks whose largest hypothesis existence is below `existence_floor`.
pub fn prune(
    mbm: &MultiBernoulliMixture,
    global_floor: f64,
    existence_floor: f64,
) -> Result<MultiBernoulliMixture> {
    let kept: Vec<&GlobalHypothesis> = mbm.globals.iter().filter(|g| g.weight >= global_floor).collect();
    let total: f64 = kept.iter().map(|g| g.weight).sum();
    if kept.is_empty() || !(total > 0.0) {
        return invalid_state("pruning removed every global hypothesis");
    }
    let keep_track: Vec<bool> = mbm
        .tracks
        .iter()
        .map(|t| t.hypotheses.iter().map(|h| h.bernoulli.r).fold(0.0, f64::max) >= existence_floor)
        .collect();

    // Merge globals that become identical once tracks are removed.
    let mut merged: Vec<GlobalHypothesis> = Vec::new();
    let mut index: HashMap<Vec<HypId>, usize> = HashMap::new();
    for g in kept {
        let selection: Vec<HypId> =
            g.selection.iter().zip(&keep_track).filter(|(_, &k)| k).map(|(h, _)| *h).collect();
        match index.get(&selection) {
            Some(&i) => merged[i].weight += g.weight / total,
            None => {
                index.insert(selection.clone(), merged.len());
                merged.push(GlobalHypothesis { selection, weight: g.weight / total });
            }
        }
    }
    let mut tracks: Vec<Track> =
        mbm.tracks.iter().zip(&keep_track).filter(|(_, &k)| k).map(|(t, _)| t.clone()).collect();
    let used: Vec<HashSet<HypId>> =
        (0..tracks.len()).map(|i| merged.iter().map(|g| g.selection[i]).collect()).collect();
    for (t, u) in tracks.iter_mut().zip(&used) {
        t.hypotheses.retain(|h| u.contains(&h.id));
    }
    MultiBernoulliMixture { tracks, globals: merged }.marginals_from_globals()
}

/// Tentative track for a measurement outside every gate. Position comes from
/// the measurement with covariance `R`, velocity starts at zero.
pub fn birth_track(
    z: &DVector<f64>,
    model: &LinearGaussianModel,
    pd: f64,
    lambda_fa_density: f64,
    config: &AssocConfig,
    ids: &mut IdGen,
) -> Result<Track> {
    let d = model.state_dim();
    let m = model.meas_dim();
    // Assumes the measurement observes the leading state coordinates.
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        cov[(i, i)] = config.birth_velocity_var;
    }
    for i in 0..m.min(d) {
        mean[i] = z[i];
        for j in 0..m.min(d) {
            cov[(i, j)] = model.r[(i, j)];
        }
    }
    let num = config.birth_intensity * pd;
    let r = if num > 0.0 { num / (lambda_fa_density + num) } else { 0.0 };
    let bern = BernoulliGaussian::gaussian(r, Gaussian::new(mean, cov)?)?;
    Ok(Track::single(ids.track(), ids.hyp(), bern))
}
