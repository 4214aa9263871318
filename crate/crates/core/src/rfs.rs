//! Random-finite-set domain model: Bernoulli components, single-target
//! hypotheses, tracks, global hypotheses and the multi-Bernoulli mixture.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_state, Result};
use crate::gauss::{moment_match_iter, Gaussian};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HypId(pub u64);

/// Monotone identifier source. One per filter so logs are reproducible.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn new() -> Self {
        Self::default()
    }

    /// Generator whose first identifier is `next`.
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn track(&mut self) -> TrackId {
        TrackId(self.bump())
    }

    pub fn hyp(&mut self) -> HypId {
        HypId(self.bump())
    }

    fn bump(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Weighted Gaussian mixture; weights are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<(f64, Gaussian)>,
}

impl GaussianMixture {
    pub fn single(g: Gaussian) -> Self {
        Self { components: vec![(1.0, g)] }
    }

    /// Builds a mixture from unnormalized weights.
    pub fn from_weighted(components: Vec<(f64, Gaussian)>) -> Result<Self> {
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.is_empty() || !(total > 0.0) || components.iter().any(|(w, _)| !(*w >= 0.0)) {
            return invalid_arg("mixture needs nonnegative weights with positive total");
        }
        let components = components.into_iter().map(|(w, g)| (w / total, g)).collect();
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |(_, g)| g.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return invalid_arg("empty mixture");
        }
        let total: f64 = self.components.iter().map(|(w, _)| *w).sum();
        if (total - 1.0).abs() > SUM_TOL || self.components.iter().any(|(w, _)| *w < 0.0) {
            return invalid_arg(format!("mixture weights sum to {total}"));
        }
        let d = self.dim();
        if self.components.iter().any(|(_, g)| g.dim() != d) {
            return invalid_arg("mixture components differ in dimension");
        }
        Ok(())
    }

    /// Moment-matched single Gaussian.
    pub fn moments(&self) -> Gaussian {
        if self.components.len() == 1 {
            return self.components[0].1.clone();
        }
        moment_match_iter(self.components.iter().map(|(w, g)| (*w, g)))
            .expect("validated mixture has positive weight")
    }

    /// Highest-weight component; ties go to the earliest.
    pub fn best_component(&self) -> &Gaussian {
        let mut best = 0;
        for (i, (w, _)) in self.components.iter().enumerate() {
            if *w > self.components[best].0 {
                best = i;
            }
        }
        &self.components[best].1
    }

    /// Drops components below `floor` (relative weight) and merges the
    /// smallest remaining component into its nearest neighbour until at most
    /// `cap` components remain.
    pub fn reduce(&mut self, floor: f64, cap: usize) {
        let cap = cap.max(1);
        if self.components.len() > 1 && floor > 0.0 {
            let max_w = self.components.iter().map(|(w, _)| *w).fold(0.0, f64::max);
            self.components.retain(|(w, _)| *w >= floor * max_w);
        }
        while self.components.len() > cap {
            let (small, _) = self
                .components
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, (w, _))| if *w < acc.1 { (i, *w) } else { acc });
            let (ws, gs) = self.components.remove(small);
            let nearest = self
                .components
                .iter()
                .enumerate()
                .map(|(i, (_, g))| (i, (&g.mean - &gs.mean).norm_squared()))
                .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc })
                .0;
            let (wn, gn) = &self.components[nearest];
            let merged = moment_match_iter([(ws, &gs), (*wn, gn)]).unwrap_or_else(|_| gn.clone());
            self.components[nearest] = (ws + wn, merged);
        }
        let total: f64 = self.components.iter().map(|(w, _)| *w).sum();
        for (w, _) in &mut self.components {
            *w /= total;
        }
    }
}

/// Bernoulli component with existence probability `r` and a (mixture) state density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliGaussian {
    pub r: f64,
    pub density: GaussianMixture,
}

impl BernoulliGaussian {
    pub fn new(r: f64, density: GaussianMixture) -> Result<Self> {
        let b = Self { r, density };
        b.validate()?;
        Ok(b)
    }

    pub fn gaussian(r: f64, g: Gaussian) -> Result<Self> {
        Self::new(r, GaussianMixture::single(g))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return invalid_arg(format!("existence probability {} outside [0, 1]", self.r));
        }
        self.density.validate()
    }

    pub fn moments(&self) -> Gaussian {
        self.density.moments()
    }
}

/// Single-target hypothesis of a track, with its marginal probability `p_i(h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: HypId,
    pub bernoulli: BernoulliGaussian,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub hypotheses: Vec<Hypothesis>,
}

impl Track {
    /// A track carrying one certain hypothesis.
    pub fn single(id: TrackId, hyp: HypId, bernoulli: BernoulliGaussian) -> Self {
        Self { id, hypotheses: vec![Hypothesis { id: hyp, bernoulli, prob: 1.0 }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return invalid_arg(format!("track {:?} has no hypotheses", self.id));
        }
        let total: f64 = self.hypotheses.iter().map(|h| h.prob).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return invalid_arg(format!("track {:?} marginals sum to {total}", self.id));
        }
        let mut seen = HashSet::new();
        for h in &self.hypotheses {
            if !(0.0..=1.0).contains(&h.prob) {
                return invalid_arg(format!("hypothesis {:?} has probability {}", h.id, h.prob));
            }
            if !seen.insert(h.id) {
                return invalid_arg(format!("duplicate hypothesis id {:?}", h.id));
            }
            h.bernoulli.validate()?;
        }
        Ok(())
    }

    /// Hypothesis with the largest marginal probability; ties go to the earliest.
    pub fn best_hypothesis(&self) -> &Hypothesis {
        let mut best = &self.hypotheses[0];
        for h in &self.hypotheses[1..] {
            if h.prob > best.prob {
                best = h;
            }
        }
        best
    }

    /// Marginal existence probability `Σ_h p(h) r_h`.
    pub fn existence(&self) -> f64 {
        self.hypotheses.iter().map(|h| h.prob * h.bernoulli.r).sum::<f64>().clamp(0.0, 1.0)
    }

    /// Expands every mixture component of every hypothesis into its own
    /// Gaussian hypothesis. A Bernoulli whose density is a mixture equals the
    /// mixture of Bernoullis sharing its existence probability, so the
    /// marginals become `p(h) w_k`.
    pub fn split_mixtures(&self, ids: &mut IdGen) -> Track {
        let mut hypotheses = Vec::new();
        for h in &self.hypotheses {
            if h.bernoulli.density.len() == 1 {
                hypotheses.push(h.clone());
                continue;
            }
            for (w, g) in &h.bernoulli.density.components {
                hypotheses.push(Hypothesis {
                    id: ids.hyp(),
                    bernoulli: BernoulliGaussian { r: h.bernoulli.r, density: GaussianMixture::single(g.clone()) },
                    prob: h.prob * w,
                });
            }
        }
        Track { id: self.id, hypotheses }
    }
}

/// One joint selection `a = (h_1, …, h_N)` with probability `w_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalHypothesis {
    pub selection: Vec<HypId>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultiBernoulliMixture {
    pub tracks: Vec<Track>,
    pub globals: Vec<GlobalHypothesis>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DumpLine {
    Track(Track),
    Globals { globals: Vec<GlobalHypothesis> },
}

impl MultiBernoulliMixture {
    /// A multi-Bernoulli: each track has one hypothesis and a single global.
    pub fn from_tracks(tracks: Vec<Track>) -> Self {
        let selection = tracks.iter().map(|t| t.best_hypothesis().id).collect();
        Self { tracks, globals: vec![GlobalHypothesis { selection, weight: 1.0 }] }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.tracks {
            t.validate()?;
        }
        let total: f64 = self.globals.iter().map(|g| g.weight).sum();
        if !self.globals.is_empty() && (total - 1.0).abs() > SUM_TOL {
            return invalid_arg(format!("global weights sum to {total}"));
        }
        for g in &self.globals {
            if g.weight < 0.0 {
                return invalid_arg("negative global weight");
            }
            if g.selection.len() != self.tracks.len() {
                return invalid_arg("global selection length differs from track count");
            }
            for (t, h) in self.tracks.iter().zip(&g.selection) {
                if !t.hypotheses.iter().any(|x| x.id == *h) {
                    return invalid_arg(format!("global selects unknown hypothesis {h:?} in track {:?}", t.id));
                }
            }
        }
        Ok(())
    }

    /// Recomputes every `p_i(h) = Σ_{a | h_i = h} w_a`.
    pub fn marginals_from_globals(&self) -> Result<Self> {
        if self.globals.is_empty() {
            return invalid_state("no global hypotheses to marginalize");
        }
        let total: f64 = self.globals.iter().map(|g| g.weight).sum();
        if !(total > 0.0) {
            return invalid_state("global weights sum to zero");
        }
        let mut out = self.clone();
        for (i, track) in out.tracks.iter_mut().enumerate() {
            let mut acc: HashMap<HypId, f64> = HashMap::new();
            for g in &self.globals {
                *acc.entry(g.selection[i]).or_default() += g.weight / total;
            }
            for h in &mut track.hypotheses {
                h.prob = acc.get(&h.id).copied().unwrap_or(0.0).min(1.0);
            }
        }
        Ok(out)
    }

    /// Largest gap between stored marginals and those implied by the globals.
    pub fn consistency_gap(&self) -> Result<f64> {
        let implied = self.marginals_from_globals()?;
        let mut gap: f64 = 0.0;
        for (a, b) in self.tracks.iter().zip(&implied.tracks) {
            for (x, y) in a.hypotheses.iter().zip(&b.hypotheses) {
                gap = gap.max((x.prob - y.prob).abs());
            }
        }
        Ok(gap)
    }

    /// Line-oriented JSON dump: one track per line, then one line with the globals.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tracks {
            serde_json::to_writer(&mut w, &DumpLine::Track(t.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &DumpLine::Globals { globals: self.globals.clone() })?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut mbm = Self::default();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                DumpLine::Track(t) => mbm.tracks.push(t),
                DumpLine::Globals { globals } => mbm.globals = globals,
            }
        }
        Ok(mbm)
    }
}

/// Cardinality distribution of a multi-Bernoulli: convolution of Bernoulli(r_j).
pub fn cardinality_distribution(components: &[BernoulliGaussian]) -> Vec<f64> {
    cardinality_from_existence(components.iter().map(|b| b.r))
}

pub fn cardinality_from_existence<I: IntoIterator<Item = f64>>(rs: I) -> Vec<f64> {
    let mut dist = vec![1.0];
    for r in rs {
        let mut next = vec![0.0; dist.len() + 1];
        for (n, p) in dist.iter().enumerate() {
            next[n] += p * (1.0 - r);
            next[n + 1] += p * r;
        }
        dist = next;
    }
    dist
}
