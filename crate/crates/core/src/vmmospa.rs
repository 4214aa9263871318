//! Variational MMOSPA: annealed block-coordinate descent on the smoothed
//! softmax-OSPA objective, returning a hard set estimate.
//!
//! Each estimate slot `j` carries a pseudo-existence `r̂_j` and a point
//! `x̂_j`. The optimizer uses order 2 regardless of the evaluation metric.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::rfs::{BernoulliGaussian, IdGen, Track};
use crate::transport::{solve_transport_warm, TransportProblem};
use crate::vmb::{pool_hypotheses, PooledHyp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmospaConfig {
    pub c: f64,
    /// First γ as a multiple of `1/c²`.
    pub gamma0_scale: f64,
    pub gamma_multiplier: f64,
    /// Last γ as a multiple of `1/c²`.
    pub gamma_max_scale: f64,
    pub sweeps_per_gamma: usize,
    pub r_round_tol: f64,
    /// Coordinates entering the distance. `None` uses the full state.
    pub mask: Option<Vec<usize>>,
    /// After splitting mixtures, rows whose marginal falls below this are
    /// dropped and the track renormalized. Zero keeps everything.
    pub split_floor: f64,
}

impl Default for MmospaConfig {
    fn default() -> Self {
        Self {
            c: 20.0,
            gamma0_scale: 1.0,
            gamma_multiplier: 2.0,
            gamma_max_scale: 1e4,
            sweeps_per_gamma: 5,
            r_round_tol: 1e-6,
            mask: Some(vec![0, 1]),
            split_floor: 1e-3,
        }
    }
}

impl MmospaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return invalid_arg("cutoff must be positive");
        }
        if !(self.gamma0_scale > 0.0) || !(self.gamma_multiplier > 1.0) || !(self.gamma_max_scale >= self.gamma0_scale)
        {
            return invalid_arg("annealing needs γ₀ > 0, multiplier > 1 and γ_max ≥ γ₀");
        }
        if self.sweeps_per_gamma == 0 {
            return invalid_arg("at least one sweep per γ is required");
        }
        if !(0.0..1.0).contains(&self.split_floor) {
            return invalid_arg("split floor must lie in [0, 1)");
        }
        Ok(())
    }

    /// Geometric γ levels ending exactly at γ_max.
    pub fn gamma_levels(&self) -> Vec<f64> {
        let c2 = self.c * self.c;
        let max = self.gamma_max_scale / c2;
        let mut g = self.gamma0_scale / c2;
        let mut out = Vec::new();
        while g < max * (1.0 - 1e-12) {
            out.push(g);
            g *= self.gamma_multiplier;
        }
        out.push(max);
        out
    }
}

#[derive(Debug, Clone)]
pub struct MmospaState {
    pub hyps: Vec<PooledHyp>,
    pub supplies: Vec<f64>,
    pub q: DMatrix<f64>,
    /// `q_{h,j}(1)`; `q_{h,j}(0) = 1 - q_{h,j}(1)`.
    pub q1: DMatrix<f64>,
    pub r_hat: Vec<f64>,
    pub x_hat: Vec<DVector<f64>>,
    pub gamma: f64,
    pub alpha_log: Vec<f64>,
    pub beta_log: Vec<f64>,
    /// Column prices of the last LP, reused as a warm start.
    prices: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealRow {
    pub gamma: f64,
    pub objective: f64,
    pub max_dr: f64,
}

#[derive(Debug, Clone)]
pub struct MmospaEstimate {
    /// Final `(r̂_j, x̂_j)` for every slot.
    pub slots: Vec<(f64, DVector<f64>)>,
    /// Points whose `r̂_j` rounds to one.
    pub points: Vec<DVector<f64>>,
    pub polarized: bool,
    pub trace: Vec<AnnealRow>,
}

/// `∫ f_h(x) ‖x - x̂‖² dx` over the masked coordinates.
pub fn expected_sq_dist(h: &BernoulliGaussian, x_hat: &DVector<f64>, mask: Option<&[usize]>) -> f64 {
    let g = h.moments();
    sq_dist_gaussian(&g.mean, &g.cov, x_hat, mask)
}

fn sq_dist_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>, mask: Option<&[usize]>) -> f64 {
    match mask {
        Some(m) => m.iter().map(|&i| (mean[i] - x[i]).powi(2) + cov[(i, i)]).sum(),
        None => (mean - x).norm_squared() + cov.trace(),
    }
}

fn entropy2(p1: f64) -> f64 {
    let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    xlogx(p1) + xlogx(1.0 - p1)
}

/// `1 / (1 + e^{-t})` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl MmospaState {
    /// `r̂_j` and `x̂_j` from each track's most likely hypothesis.
    pub fn init(tracks: &[Track], gamma: f64) -> Result<Self> {
        let (hyps, q, supplies) = pool_hypotheses(tracks)?;
        let mut r_hat = Vec::with_capacity(tracks.len());
        let mut x_hat = Vec::with_capacity(tracks.len());
        for t in tracks {
            let best = t.best_hypothesis();
            r_hat.push(best.bernoulli.r);
            x_hat.push(best.bernoulli.moments().mean);
        }
        let n = tracks.len();
        Ok(Self {
            q1: DMatrix::from_element(hyps.len(), n, 1.0),
            hyps,
            supplies,
            q,
            r_hat,
            x_hat,
            gamma,
            alpha_log: vec![0.0; n],
            beta_log: vec![0.0; n],
            prices: None,
        })
    }

    fn dist(&self, mask: Option<&[usize]>) -> DMatrix<f64> {
        DMatrix::from_fn(self.hyps.len(), self.x_hat.len(), |h, j| {
            let g = &self.hyps[h].gaussian;
            sq_dist_gaussian(&g.mean, &g.cov, &self.x_hat[j], mask)
        })
    }

    fn lp_cost(&self, d: &DMatrix<f64>, c2: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.hyps.len(), self.x_hat.len(), |h, j| {
            let r = self.hyps[h].r;
            let rh = self.r_hat[j];
            let q1 = self.q1[(h, j)];
            rh * r * entropy2(q1) / self.gamma
                + c2 * ((1.0 - r) * rh + r * (1.0 - rh) + r * rh * (1.0 - q1))
                + r * rh * q1 * d[(h, j)]
        })
    }

    /// The smoothed objective `J̆` at the current state.
    pub fn objective(&self, c: f64, mask: Option<&[usize]>) -> f64 {
        let c2 = c * c;
        let d = self.dist(mask);
        let cost = self.lp_cost(&d, c2);
        let smooth: f64 = self.r_hat.iter().map(|&r| entropy2(r)).sum::<f64>() / self.gamma;
        cost.component_mul(&self.q).sum() + smooth
    }

    /// One sweep of the four block updates in order.
    pub fn sweep(&mut self, c: f64, mask: Option<&[usize]>) -> Result<()> {
        let c2 = c * c;
        let gamma = self.gamma;

        let d = self.dist(mask);
        self.q1 = d.map(|dh| sigmoid(gamma * (c2 - dh)));

        let cost = self.lp_cost(&d, c2);
        let incumbent = cost.component_mul(&self.q).sum();
        let problem = TransportProblem::new(cost, self.supplies.clone())?;
        let plan = solve_transport_warm(&problem, self.prices.as_deref())?;
        self.prices = Some(plan.column_prices.clone());
        if plan.objective <= incumbent + 1e-12 * (1.0 + incumbent.abs()) {
            self.q = plan.q;
        }

        for j in 0..self.x_hat.len() {
            let mut wsum = 0.0;
            let mut acc = DVector::zeros(self.x_hat[j].len());
            for (h, hyp) in self.hyps.iter().enumerate() {
                let w = self.q[(h, j)] * hyp.r * self.q1[(h, j)];
                if w > 0.0 {
                    acc.axpy(w, &hyp.gaussian.mean, 1.0);
                    wsum += w;
                }
            }
            // No supporting mass: keep the previous point.
            if wsum > 0.0 {
                self.x_hat[j] = acc / wsum;
            }
        }

        let d = self.dist(mask);
        for j in 0..self.x_hat.len() {
            let mut la = 0.0;
            let mut lb = 0.0;
            for (h, hyp) in self.hyps.iter().enumerate() {
                let q = self.q[(h, j)];
                if q == 0.0 {
                    continue;
                }
                let r = hyp.r;
                let q1 = self.q1[(h, j)];
                la -= q * (gamma * c2 * (1.0 - r + r * (1.0 - q1)) + r * entropy2(q1) + gamma * r * q1 * d[(h, j)]);
                lb -= gamma * c2 * q * r;
            }
            self.alpha_log[j] = la;
            self.beta_log[j] = lb;
            self.r_hat[j] = sigmoid(la - lb);
        }
        Ok(())
    }
}

fn drop_light_rows(mut t: Track, floor: f64) -> Track {
    if floor <= 0.0 || t.hypotheses.len() < 2 {
        return t;
    }
    let best = t.best_hypothesis().id;
    t.hypotheses.retain(|h| h.prob >= floor || h.id == best);
    let total: f64 = t.hypotheses.iter().map(|h| h.prob).sum();
    for h in &mut t.hypotheses {
        h.prob /= total;
    }
    t
}

/// Runs the γ schedule and returns the rounded set estimate. Mixture
/// densities are split into one hypothesis per component first.
pub fn mmospa_estimate(tracks: &[Track], config: &MmospaConfig) -> Result<MmospaEstimate> {
    config.validate()?;
    if tracks.is_empty() {
        return Ok(MmospaEstimate { slots: vec![], points: vec![], polarized: true, trace: vec![] });
    }
    let max_id = tracks.iter().flat_map(|t| t.hypotheses.iter().map(|h| h.id.0)).max().unwrap_or(0);
    let mut ids = IdGen::starting_at(max_id + 1);
    let split: Vec<Track> =
        tracks.iter().map(|t| drop_light_rows(t.split_mixtures(&mut ids), config.split_floor)).collect();

    let levels = config.gamma_levels();
    let mask = config.mask.as_deref();
    let mut st = MmospaState::init(&split, levels[0])?;
    let mut trace = Vec::with_capacity(levels.len());
    for &gamma in &levels {
        st.gamma = gamma;
        let before = st.r_hat.clone();
        for _ in 0..config.sweeps_per_gamma {
            st.sweep(config.c, mask)?;
        }
        let max_dr = before.iter().zip(&st.r_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.push(AnnealRow { gamma, objective: st.objective(config.c, mask), max_dr });
    }

    let polarized = st.r_hat.iter().all(|&r| r.min(1.0 - r) <= config.r_round_tol);
    if !polarized {
        warn!("VMMOSPA existence did not polarize at the final γ; rounding to nearest");
    }
    let slots: Vec<(f64, DVector<f64>)> = st.r_hat.iter().copied().zip(st.x_hat.iter().cloned()).collect();
    let points = slots.iter().filter(|(r, _)| *r >= 0.5).map(|(_, x)| x.clone()).collect();
    Ok(MmospaEstimate { slots, points, polarized, trace })
}

/// Softmax OSPA `s_γ(X, X̂)^p` between lists of Bernoulli sets, by explicit
/// enumeration of permutations. Meant for small verification instances.
pub fn softmax_ospa_pow(
    x: &[Option<DVector<f64>>],
    x_hat: &[Option<DVector<f64>>],
    c: f64,
    p: f64,
    gamma: f64,
) -> Result<f64> {
    if x.len() != x_hat.len() {
        return invalid_arg("softmax OSPA needs equally many Bernoulli sets on both sides");
    }
    let n = x.len();
    let d = |a: &Option<DVector<f64>>, b: &Option<DVector<f64>>| -> f64 {
        match (a, b) {
            (None, None) => 0.0,
            (Some(u), Some(v)) => (u - v).norm().min(c).powf(p),
            _ => c.powf(p),
        }
    };
    let mut exps = Vec::new();
    for perm in permutations(n) {
        let s: f64 = (0..n).map(|i| d(&x[i], &x_hat[perm[i]])).sum();
        exps.push(-gamma * s);
    }
    Ok(-crate::assoc::log_sum_exp(&exps) / gamma)
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

pub fn write_anneal_csv<W: Write>(trace: &[AnnealRow], mut w: W) -> Result<()> {
    writeln!(w, "gamma,objective,max_dr")?;
    for r in trace {
        writeln!(w, "{:.6e},{:.17e},{:.6e}", r.gamma, r.objective, r.max_dr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Gaussian;
    use crate::ospa::{ospa_modified, OspaParams};
    use crate::rfs::{GaussianMixture, HypId, Hypothesis, TrackId};
    use approx::assert_relative_eq;

    fn bern(r: f64, mean: &[f64], var: &[f64]) -> BernoulliGaussian {
        BernoulliGaussian::gaussian(r, Gaussian::from_slices(mean, var).unwrap()).unwrap()
    }

    fn track(id: u64, hyps: Vec<(u64, BernoulliGaussian, f64)>) -> Track {
        Track {
            id: TrackId(id),
            hypotheses: hyps.into_iter().map(|(h, b, p)| Hypothesis { id: HypId(h), bernoulli: b, prob: p }).collect(),
        }
    }

    fn full() -> MmospaConfig {
        MmospaConfig { mask: None, ..Default::default() }
    }

    #[test]
    fn expected_sq_dist_examples() {
        let x = DVector::from_vec(vec![0.0, 0.0]);
        assert_relative_eq!(expected_sq_dist(&bern(1.0, &[0.0, 0.0], &[1.0, 1.0]), &x, None), 2.0);
        let x3 = DVector::from_vec(vec![3.0]);
        assert_relative_eq!(expected_sq_dist(&bern(1.0, &[0.0], &[1e-300]), &x3, None), 9.0);
        let x11 = DVector::from_vec(vec![1.0, 1.0]);
        assert_relative_eq!(expected_sq_dist(&bern(1.0, &[0.0, 0.0], &[1.0, 4.0]), &x11, None), 7.0);
    }

    #[test]
    fn gamma_levels_end_at_max() {
        let l = MmospaConfig::default().gamma_levels();
        assert_relative_eq!(l[0], 1.0 / 400.0);
        assert_relative_eq!(*l.last().unwrap(), 1e4 / 400.0);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn certain_target_gives_its_mean() {
        let t = track(0, vec![(1, bern(1.0, &[3.0, -2.0], &[0.01, 0.01]), 1.0)]);
        let est = mmospa_estimate(&[t], &full()).unwrap();
        assert!(est.polarized);
        assert_eq!(est.points.len(), 1);
        assert_relative_eq!(est.points[0], DVector::from_vec(vec![3.0, -2.0]), epsilon = 1e-12);
        assert!(est.slots[0].0 > 1.0 - 1e-6);
    }

    #[test]
    fn unlikely_target_is_omitted() {
        let t = track(0, vec![(1, bern(0.1, &[3.0, -2.0], &[0.01, 0.01]), 1.0)]);
        let est = mmospa_estimate(&[t], &full()).unwrap();
        assert!(est.points.is_empty());
        assert!(est.slots[0].0 < 1e-6);
    }

    #[test]
    fn coalesced_pair_is_separated() {
        let shared = |t| track(t, vec![(1, bern(1.0, &[-5.0], &[0.01]), 0.5), (2, bern(1.0, &[5.0], &[0.01]), 0.5)]);
        let est = mmospa_estimate(&[shared(0), shared(1)], &full()).unwrap();
        assert_eq!(est.points.len(), 2);
        let mut xs: Vec<f64> = est.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);

        // Grid search for the minimizer of the expected modified OSPA².
        let truth = [DVector::from_element(1, -5.0), DVector::from_element(1, 5.0)];
        let params = OspaParams::new(2.0, 20.0).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in -40..=40 {
            for b in a..=40 {
                let cand = [DVector::from_element(1, a as f64 * 0.25), DVector::from_element(1, b as f64 * 0.25)];
                let v = ospa_modified(&truth, &cand, &params).unwrap().powi(2);
                if v < best.0 {
                    best = (v, a as f64 * 0.25, b as f64 * 0.25);
                }
            }
        }
        assert_relative_eq!(xs[0], best.1, epsilon = 0.25);
        assert_relative_eq!(xs[1], best.2, epsilon = 0.25);
    }

    #[test]
    fn separated_targets_match_posterior_means() {
        let t0 = track(0, vec![(1, bern(1.0, &[0.0, 0.0], &[1.0, 1.0]), 0.6), (2, bern(1.0, &[1.0, 0.5], &[1.0, 1.0]), 0.4)]);
        let t1 = track(1, vec![(3, bern(0.999, &[80.0, 10.0], &[2.0, 2.0]), 1.0)]);
        let cfg = MmospaConfig::default();
        let est = mmospa_estimate(&[t0.clone(), t1.clone()], &cfg).unwrap();
        assert!(est.polarized);
        assert_eq!(est.points.len(), 2);
        assert_relative_eq!(est.points[0][0], 0.4, epsilon = 1e-4);
        assert_relative_eq!(est.points[0][1], 0.2, epsilon = 1e-4);
        assert_relative_eq!(est.points[1][0], 80.0, epsilon = 1e-4);
    }

    #[test]
    fn mixture_tracks_are_split() {
        let g = |m: f64| Gaussian::from_slices(&[m, 0.0], &[0.1, 0.1]).unwrap();
        let dens = GaussianMixture::from_weighted(vec![(0.5, g(-1.0)), (0.5, g(1.0))]).unwrap();
        let t = track(0, vec![(7, BernoulliGaussian::new(1.0, dens).unwrap(), 1.0)]);
        let est = mmospa_estimate(&[t], &MmospaConfig::default()).unwrap();
        assert_eq!(est.points.len(), 1);
        assert_relative_eq!(est.points[0][0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn objective_never_increases_within_a_level() {
        let t0 = track(0, vec![(1, bern(0.9, &[-2.0, 0.0], &[1.0, 1.0]), 0.7), (2, bern(0.6, &[2.0, 0.0], &[1.0, 1.0]), 0.3)]);
        let t1 = track(1, vec![(1, bern(0.9, &[-2.0, 0.0], &[1.0, 1.0]), 0.3), (2, bern(0.6, &[2.0, 0.0], &[1.0, 1.0]), 0.7)]);
        let cfg = MmospaConfig::default();
        let mut st = MmospaState::init(&[t0, t1], 0.0).unwrap();
        for gamma in cfg.gamma_levels() {
            st.gamma = gamma;
            let mut prev = f64::INFINITY;
            for _ in 0..cfg.sweeps_per_gamma {
                st.sweep(cfg.c, cfg.mask.as_deref()).unwrap();
                let j = st.objective(cfg.c, cfg.mask.as_deref());
                assert!(j <= prev + 1e-9 * (1.0 + prev.abs()), "{j} > {prev} at γ={gamma}");
                prev = j;
            }
        }
    }

    #[test]
    fn softmax_approaches_minimum() {
        let pt = |x: f64| Some(DVector::from_element(1, x));
        let x = vec![pt(0.0), pt(3.0), None];
        let xh = vec![pt(2.5), None, pt(0.2)];
        let params = OspaParams::new(2.0, 20.0).unwrap();
        let xs: Vec<_> = x.iter().flatten().cloned().collect();
        let ys: Vec<_> = xh.iter().flatten().cloned().collect();
        let exact = ospa_modified(&xs, &ys, &params).unwrap().powi(2);
        for gamma in [0.01, 0.1, 1.0, 10.0] {
            let s = softmax_ospa_pow(&x, &xh, 20.0, 2.0, gamma).unwrap();
            assert!(s <= exact + 1e-9);
            assert!(exact - s <= 6f64.ln() / gamma + 1e-9);
        }
    }

    #[test]
    fn empty_input() {
        let est = mmospa_estimate(&[], &MmospaConfig::default()).unwrap();
        assert!(est.points.is_empty());
    }
}
