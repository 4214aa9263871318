//! Variational multi-Bernoulli reduction: collapse the hypotheses of a
//! cluster of tracks into one Bernoulli-Gaussian component per track by
//! alternating moment matching with a transportation LP over `q(h, j)`.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::gauss::{cholesky, log_det_2pi, moment_match_iter, Gaussian};
use crate::rfs::{BernoulliGaussian, GaussianMixture, HypId, Track};
use crate::transport::{solve_transport_warm, TransportProblem};

/// Existence probabilities are clamped to `[R_CLAMP, 1 - R_CLAMP]` inside logs.
pub const R_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VmbConfig {
    pub max_iters: usize,
    /// Stop once the relative LP improvement drops below this and `q` has settled.
    pub rel_tol: f64,
    /// Largest entrywise change of `q` still treated as settled.
    pub q_tol: f64,
    /// Zero gives the hard (LP) E-step. Positive values use an entropic
    /// transport solve and are experimental.
    pub temperature: f64,
}

impl Default for VmbConfig {
    fn default() -> Self {
        Self { max_iters: 100, rel_tol: 1e-6, q_tol: 1e-9, temperature: 0.0 }
    }
}

/// A hypothesis of the pooled set `H`, mixtures already moment matched.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledHyp {
    pub id: HypId,
    pub r: f64,
    pub gaussian: Gaussian,
    pub density: GaussianMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub max_dq: f64,
    /// Worst violation of the row and column sums of `q`.
    pub marginal_residual: f64,
}

#[derive(Debug, Clone)]
pub struct VmbState {
    pub hyps: Vec<PooledHyp>,
    /// Supplies `p_h = Σ_i p_i(h)`.
    pub supplies: Vec<f64>,
    pub q: DMatrix<f64>,
    pub reduced: Vec<(f64, Gaussian)>,
    pub trace: Vec<TraceRow>,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct VmbOutput {
    /// Bernoulli-Gaussian reduction `(r̂_j, μ̂_j, Σ̂_j)`.
    pub reduced: Vec<BernoulliGaussian>,
    /// Mixture-retaining components `g_j = Σ_h q(h, j) f_h`.
    pub mixtures: Vec<BernoulliGaussian>,
    pub q: DMatrix<f64>,
    pub hyps: Vec<PooledHyp>,
    pub supplies: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Pools the hypotheses of all tracks into `H` and returns them with the
/// initial plan `q(h, j) = p_j(h)` and supplies `p_h`. Hypotheses sharing an
/// id across tracks are pooled.
pub fn pool_hypotheses(tracks: &[Track]) -> Result<(Vec<PooledHyp>, DMatrix<f64>, Vec<f64>)> {
    if tracks.is_empty() {
        return invalid_arg("cannot reduce an empty set of tracks");
    }
    let mut index: HashMap<HypId, usize> = HashMap::new();
    let mut hyps: Vec<PooledHyp> = Vec::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (j, t) in tracks.iter().enumerate() {
        t.validate()?;
        for h in &t.hypotheses {
            let row = *index.entry(h.id).or_insert_with(|| {
                hyps.push(PooledHyp {
                    id: h.id,
                    r: h.bernoulli.r,
                    gaussian: h.bernoulli.density.moments(),
                    density: h.bernoulli.density.clone(),
                });
                hyps.len() - 1
            });
            entries.push((row, j, h.prob));
        }
    }
    let mut q = DMatrix::zeros(hyps.len(), tracks.len());
    for (h, j, p) in entries {
        q[(h, j)] += p;
    }
    let supplies = q.row_iter().map(|r| r.sum()).collect();
    Ok((hyps, q, supplies))
}

pub fn vmb_init(tracks: &[Track]) -> Result<VmbState> {
    let (hyps, q, supplies) = pool_hypotheses(tracks)?;
    let reduced = m_step(&q, &hyps)?;
    Ok(VmbState { hyps, supplies, q, reduced, trace: Vec::new(), temperature: 0.0 })
}

/// Moment matching of column `j` with weights `q(h, j) r_h`. A column with
/// zero existence mass falls back to the unweighted `q` average so the
/// following E-step stays finite.
pub fn m_step(q: &DMatrix<f64>, hyps: &[PooledHyp]) -> Result<Vec<(f64, Gaussian)>> {
    let mut out = Vec::with_capacity(q.ncols());
    for j in 0..q.ncols() {
        let r_hat: f64 = (0..hyps.len()).map(|h| q[(h, j)] * hyps[h].r).sum();
        let weighted = moment_match_iter((0..hyps.len()).map(|h| (q[(h, j)] * hyps[h].r, &hyps[h].gaussian)));
        let g = match weighted {
            Ok(g) if r_hat > 0.0 => g,
            _ => moment_match_iter((0..hyps.len()).map(|h| (q[(h, j)], &hyps[h].gaussian)))?,
        };
        out.push((r_hat.clamp(0.0, 1.0), g));
    }
    Ok(out)
}

/// Cross entropy `-∫ f_h log g_j δX` between Bernoulli-Gaussian densities.
pub fn e_step_cost(r_h: f64, f_h: &Gaussian, r_hat: f64, g: &Gaussian) -> Result<f64> {
    let rc = r_hat.clamp(R_CLAMP, 1.0 - R_CLAMP);
    let mut c = -(1.0 - r_h) * (1.0 - rc).ln() - r_h * rc.ln();
    if r_h > 0.0 {
        c += 0.5 * r_h * gaussian_cross_term(f_h, g)?;
    }
    Ok(c)
}

/// `tr(Σ̂⁻¹Σ) + (μ-μ̂)ᵀΣ̂⁻¹(μ-μ̂) + log|2πΣ̂|`.
fn gaussian_cross_term(f: &Gaussian, g: &Gaussian) -> Result<f64> {
    let chol = cholesky(&g.cov)?;
    let tr = chol.solve(&f.cov).trace();
    let d = &f.mean - &g.mean;
    let maha = d.dot(&chol.solve(&d));
    Ok(tr + maha + log_det_2pi(&chol))
}

fn cost_matrix(hyps: &[PooledHyp], reduced: &[(f64, Gaussian)]) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(hyps.len(), reduced.len());
    for (j, (r_hat, g)) in reduced.iter().enumerate() {
        // Factor Σ̂_j once per column.
        let rc = r_hat.clamp(R_CLAMP, 1.0 - R_CLAMP);
        let chol = cholesky(&g.cov)?;
        let log_det = log_det_2pi(&chol);
        for (h, hyp) in hyps.iter().enumerate() {
            let mut v = -(1.0 - hyp.r) * (1.0 - rc).ln() - hyp.r * rc.ln();
            if hyp.r > 0.0 {
                let d = &hyp.gaussian.mean - &g.mean;
                let quad = chol.solve(&hyp.gaussian.cov).trace() + d.dot(&chol.solve(&d)) + log_det;
                v += 0.5 * hyp.r * quad;
            }
            c[(h, j)] = v;
        }
    }
    Ok(c)
}

pub(crate) fn marginal_residual(q: &DMatrix<f64>, supplies: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..q.ncols() {
        worst = worst.max((q.column(j).sum() - 1.0).abs());
    }
    for (h, p) in supplies.iter().enumerate() {
        worst = worst.max((q.row(h).sum() - p).abs());
    }
    worst
}

/// Runs the reduction of one cluster to convergence.
pub fn vmb_reduce(tracks: &[Track], config: &VmbConfig) -> Result<VmbOutput> {
    if !(0.0..=1.0).contains(&config.temperature) {
        return invalid_arg(format!("temperature {} outside [0, 1]", config.temperature));
    }
    let mut st = vmb_init(tracks)?;
    st.temperature = config.temperature;

    let cost0 = cost_matrix(&st.hyps, &st.reduced)?;
    let mut prev = cost0.component_mul(&st.q).sum();
    st.trace.push(TraceRow {
        iteration: 0,
        objective: prev,
        max_dq: 0.0,
        marginal_residual: marginal_residual(&st.q, &st.supplies),
    });

    let mut prices: Option<Vec<f64>> = None;
    for iteration in 1..=config.max_iters {
        let cost = cost_matrix(&st.hyps, &st.reduced)?;
        let incumbent = cost.component_mul(&st.q).sum();
        let (q_new, objective) = if config.temperature > 0.0 {
            let q = sinkhorn(&cost, &st.supplies, config.temperature);
            let obj = cost.component_mul(&q).sum();
            (q, obj)
        } else {
            let problem = TransportProblem::new(cost.clone(), st.supplies.clone())?;
            let plan = solve_transport_warm(&problem, prices.as_deref())?;
            prices = Some(plan.column_prices.clone());
            // Rounding can leave the new plan a hair worse than the current
            // one; keep the incumbent then.
            if plan.objective > incumbent + 1e-12 * (1.0 + incumbent.abs()) {
                (st.q.clone(), incumbent)
            } else {
                (plan.q, plan.objective)
            }
        };
        let max_dq = (&q_new - &st.q).amax();
        st.q = q_new;
        st.reduced = m_step(&st.q, &st.hyps)?;
        st.trace.push(TraceRow {
            iteration,
            objective,
            max_dq,
            marginal_residual: marginal_residual(&st.q, &st.supplies),
        });
        let rel = (prev - objective) / prev.abs().max(1e-300);
        prev = objective;
        if rel < config.rel_tol && max_dq <= config.q_tol {
            break;
        }
    }
    Ok(finish(st))
}

fn finish(st: VmbState) -> VmbOutput {
    let n = st.q.ncols();
    let mut reduced = Vec::with_capacity(n);
    let mut mixtures = Vec::with_capacity(n);
    for j in 0..n {
        let (r_hat, g) = &st.reduced[j];
        reduced.push(BernoulliGaussian { r: *r_hat, density: GaussianMixture::single(g.clone()) });
        let weight_of = |h: usize| if *r_hat > 0.0 { st.q[(h, j)] * st.hyps[h].r } else { st.q[(h, j)] };
        let mut comps = Vec::new();
        for (h, hyp) in st.hyps.iter().enumerate() {
            let wh = weight_of(h);
            if wh <= 0.0 {
                continue;
            }
            for (w, g) in &hyp.density.components {
                comps.push((wh * w, g.clone()));
            }
        }
        let density = GaussianMixture::from_weighted(comps).unwrap_or_else(|_| GaussianMixture::single(g.clone()));
        mixtures.push(BernoulliGaussian { r: *r_hat, density });
    }
    VmbOutput { reduced, mixtures, q: st.q, hyps: st.hyps, supplies: st.supplies, trace: st.trace }
}

/// Entropic transport `min Σ C q + T Σ q log q` by log-domain Sinkhorn.
pub(crate) fn sinkhorn(cost: &DMatrix<f64>, supplies: &[f64], temperature: f64) -> DMatrix<f64> {
    let (rows, cols) = cost.shape();
    let log_a: Vec<f64> = supplies.iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect();
    let mut f = vec![0.0; rows];
    let mut g = vec![0.0; cols];
    let lse = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        crate::assoc::log_sum_exp(&v)
    };
    for _ in 0..2000 {
        for h in 0..rows {
            let s = lse(&mut (0..cols).map(|j| g[j] - cost[(h, j)] / temperature));
            f[h] = log_a[h] - s;
        }
        let mut worst: f64 = 0.0;
        for j in 0..cols {
            let s = lse(&mut (0..rows).map(|h| f[h] - cost[(h, j)] / temperature));
            let new = -s;
            worst = worst.max((new - g[j]).abs());
            g[j] = new;
        }
        if worst < 1e-13 {
            break;
        }
    }
    DMatrix::from_fn(rows, cols, |h, j| {
        if log_a[h] == f64::NEG_INFINITY {
            0.0
        } else {
            (f[h] + g[j] - cost[(h, j)] / temperature).exp()
        }
    })
}

/// Writes the trace as CSV rows `iteration,objective,max_dq,marginal_residual`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "iteration,objective,max_dq,marginal_residual")?;
    for r in trace {
        writeln!(w, "{},{:.17e},{:.6e},{:.6e}", r.iteration, r.objective, r.max_dq, r.marginal_residual)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfs::{Hypothesis, IdGen};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::from_slices(&[m], &[v]).unwrap()
    }

    fn hyp(id: u64, r: f64, m: f64, v: f64, p: f64) -> Hypothesis {
        Hypothesis { id: HypId(id), bernoulli: BernoulliGaussian::gaussian(r, g1(m, v)).unwrap(), prob: p }
    }

    fn track(id: u64, hyps: Vec<Hypothesis>) -> Track {
        Track { id: crate::rfs::TrackId(id), hypotheses: hyps }
    }

    fn pooled(r: f64, m: f64, v: f64) -> PooledHyp {
        PooledHyp { id: HypId(0), r, gaussian: g1(m, v), density: GaussianMixture::single(g1(m, v)) }
    }

    #[test]
    fn init_examples() {
        let s = vmb_init(&[track(0, vec![hyp(1, 0.9, 0.0, 1.0, 1.0)])]).unwrap();
        assert_eq!(s.q, DMatrix::from_element(1, 1, 1.0));

        let shared = |t| track(t, vec![hyp(1, 1.0, -5.0, 1.0, 0.5), hyp(2, 1.0, 5.0, 1.0, 0.5)]);
        let s = vmb_init(&[shared(0), shared(1)]).unwrap();
        assert_eq!(s.q, DMatrix::from_element(2, 2, 0.5));
        assert_eq!(s.supplies, vec![1.0, 1.0]);

        let s = vmb_init(&[
            track(0, vec![hyp(1, 1.0, 0.0, 1.0, 0.3), hyp(2, 1.0, 1.0, 1.0, 0.7)]),
            track(1, vec![hyp(3, 1.0, 9.0, 1.0, 1.0)]),
        ])
        .unwrap();
        assert_eq!(s.q, DMatrix::from_row_slice(3, 2, &[0.3, 0.0, 0.7, 0.0, 0.0, 1.0]));
        assert!(vmb_init(&[]).is_err());
    }

    #[test]
    fn m_step_examples() {
        let hyps = vec![pooled(0.2, 0.0, 1.0), pooled(0.6, 2.0, 1.0)];
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let red = m_step(&q, &hyps).unwrap();
        assert_relative_eq!(red[0].0, 0.4, epsilon = 1e-15);
        assert_relative_eq!(red[0].1.mean[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(red[0].1.cov[(0, 0)], 1.75, epsilon = 1e-12);

        let q = DMatrix::identity(2, 2);
        let red = m_step(&q, &hyps).unwrap();
        assert_eq!(red[1].1, hyps[1].gaussian);
        assert_relative_eq!(red[1].0, 0.6);

        let hyps = vec![pooled(1.0, -1.0, 1.0), pooled(1.0, 1.0, 1.0)];
        let q = DMatrix::from_element(2, 1, 0.5);
        let red = m_step(&q, &hyps).unwrap();
        assert_eq!(red[0].0, 1.0);
        assert_relative_eq!(red[0].1.mean[0], 0.0);
        assert_relative_eq!(red[0].1.cov[(0, 0)], 2.0);

        // Zero existence falls back to the q average.
        let hyps = vec![pooled(0.0, -1.0, 1.0), pooled(0.0, 3.0, 1.0)];
        let red = m_step(&q, &hyps).unwrap();
        assert_eq!(red[0].0, 0.0);
        assert_relative_eq!(red[0].1.mean[0], 1.0);
    }

    #[test]
    fn e_step_examples() {
        let n = g1(0.0, 1.0);
        assert_relative_eq!(e_step_cost(0.0, &n, 0.5, &n).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let base = 0.5 * (1.0 + (2.0 * PI).ln());
        assert_relative_eq!(e_step_cost(1.0, &n, 1.0, &n).unwrap(), base, epsilon = 1e-8);
        assert_relative_eq!(e_step_cost(1.0, &g1(2.0, 1.0), 1.0, &n).unwrap(), base + 2.0, epsilon = 1e-8);
    }

    #[test]
    fn single_track_is_a_fixed_point() {
        let t = track(0, vec![hyp(1, 0.8, 3.0, 2.0, 1.0)]);
        let out = vmb_reduce(&[t], &VmbConfig::default()).unwrap();
        assert_eq!(out.reduced[0].r, 0.8);
        assert_eq!(out.reduced[0].moments(), g1(3.0, 2.0));
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn symmetric_pair_splits() {
        let shared = |t| track(t, vec![hyp(1, 1.0, -5.0, 1.0, 0.5), hyp(2, 1.0, 5.0, 1.0, 0.5)]);
        let out = vmb_reduce(&[shared(0), shared(1)], &VmbConfig::default()).unwrap();
        let is_perm = out.q == DMatrix::identity(2, 2) || out.q == DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        assert!(is_perm, "{}", out.q);
        let mut means: Vec<f64> = out.reduced.iter().map(|b| b.moments().mean[0]).collect();
        means.sort_by(f64::total_cmp);
        assert_relative_eq!(means[0], -5.0, epsilon = 1e-12);
        assert_relative_eq!(means[1], 5.0, epsilon = 1e-12);
        for b in &out.reduced {
            assert_relative_eq!(b.moments().cov[(0, 0)], 1.0, epsilon = 1e-12);
        }
        for w in out.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9);
        }
        // Sum of entropies is lower at the split point than at the start.
        let hyps = [(1.0, g1(-5.0, 1.0)), (1.0, g1(5.0, 1.0))];
        let coalesced = entropy_sum(&DMatrix::from_element(2, 2, 0.5), &hyps);
        let split = entropy_sum(&out.q, &hyps);
        assert!(split < coalesced - 0.5, "{split} vs {coalesced}");
    }

    #[test]
    fn separated_tracks_converge_in_one_step() {
        let t0 = track(0, vec![hyp(1, 0.9, -50.0, 1.0, 0.7), hyp(2, 0.9, -49.0, 1.0, 0.3)]);
        let t1 = track(1, vec![hyp(3, 0.9, 50.0, 1.0, 1.0)]);
        let out = vmb_reduce(&[t0, t1], &VmbConfig::default()).unwrap();
        assert_eq!(out.trace.len(), 2);
        assert!(out.trace[1].max_dq <= 1e-9);
    }

    #[test]
    fn cardinality_mean_is_preserved() {
        let t0 = track(0, vec![hyp(1, 0.3, -1.0, 1.0, 0.4), hyp(2, 0.8, 1.0, 2.0, 0.6)]);
        let t1 = track(1, vec![hyp(1, 0.3, -1.0, 1.0, 0.6), hyp(3, 0.5, 0.0, 1.0, 0.4)]);
        let tracks = [t0, t1];
        let out = vmb_reduce(&tracks, &VmbConfig::default()).unwrap();
        let before: f64 = out.hyps.iter().zip(&out.supplies).map(|(h, p)| h.r * p).sum();
        let after: f64 = out.reduced.iter().map(|b| b.r).sum();
        assert_relative_eq!(before, after, epsilon = 1e-9);
        assert!(out.trace.iter().all(|r| r.marginal_residual <= 1e-6));
    }

    #[test]
    fn positive_temperature_keeps_marginals() {
        let shared = |t| track(t, vec![hyp(1, 1.0, -1.0, 1.0, 0.5), hyp(2, 1.0, 1.0, 1.0, 0.5)]);
        let cfg = VmbConfig { temperature: 0.5, ..Default::default() };
        let out = vmb_reduce(&[shared(0), shared(1)], &cfg).unwrap();
        assert!(out.trace.iter().all(|r| r.marginal_residual <= 1e-6));
        assert!(vmb_reduce(&[shared(0)], &VmbConfig { temperature: 2.0, ..Default::default() }).is_err());
    }

    #[test]
    fn mixture_output_collects_components() {
        let mut ids = IdGen::new();
        let dens = GaussianMixture::from_weighted(vec![(0.5, g1(-1.0, 1.0)), (0.5, g1(1.0, 1.0))]).unwrap();
        let t = Track::single(ids.track(), ids.hyp(), BernoulliGaussian::new(0.9, dens).unwrap());
        let out = vmb_reduce(&[t], &VmbConfig::default()).unwrap();
        assert_eq!(out.mixtures[0].density.len(), 2);
        assert_relative_eq!(out.reduced[0].moments().cov[(0, 0)], 2.0, epsilon = 1e-12);
    }

    /// Σ_j of the differential set entropy of `g_j = Σ_h q(h, j) f_h` for
    /// 1-d Bernoulli-Gaussian hypotheses, by midpoint quadrature.
    pub(crate) fn entropy_sum(q: &DMatrix<f64>, hyps: &[(f64, Gaussian)]) -> f64 {
        let (lo, hi, n) = (-40.0, 40.0, 80_000);
        let dx = (hi - lo) / n as f64;
        let mut total = 0.0;
        for j in 0..q.ncols() {
            let empty: f64 = hyps.iter().enumerate().map(|(h, (r, _))| q[(h, j)] * (1.0 - r)).sum();
            if empty > 0.0 {
                total -= empty * empty.ln();
            }
            for k in 0..n {
                let x = nalgebra::DVector::from_element(1, lo + (k as f64 + 0.5) * dx);
                let v: f64 = hyps
                    .iter()
                    .enumerate()
                    .map(|(h, (r, g))| q[(h, j)] * r * g.log_pdf(&x).unwrap().exp())
                    .sum();
                if v > 0.0 {
                    total -= v * v.ln() * dx;
                }
            }
        }
        total
    }

    #[test]
    fn sum_of_entropies_equals_relaxed_objective_at_mixture_optimum() {
        // With g_j set to the q-mixture, the relaxed objective evaluated term
        // by term over hypotheses equals the entropy of each mixture.
        let hyps = [(0.7, g1(-2.0, 1.0)), (0.9, g1(1.0, 0.5)), (0.4, g1(3.0, 2.0))];
        let q = DMatrix::from_row_slice(3, 2, &[0.6, 0.2, 0.4, 0.3, 0.0, 0.5]);
        let (lo, hi, n) = (-40.0, 40.0, 80_000);
        let dx = (hi - lo) / n as f64;
        let mut relaxed = 0.0;
        for j in 0..2 {
            let g_empty: f64 = (0..3).map(|h| q[(h, j)] * (1.0 - hyps[h].0)).sum();
            for (h, (r, f)) in hyps.iter().enumerate() {
                if q[(h, j)] == 0.0 {
                    continue;
                }
                let mut term = -(1.0 - r) * g_empty.ln();
                for k in 0..n {
                    let x = nalgebra::DVector::from_element(1, lo + (k as f64 + 0.5) * dx);
                    let g: f64 = (0..3).map(|m| q[(m, j)] * hyps[m].0 * hyps[m].1.log_pdf(&x).unwrap().exp()).sum();
                    if g > 0.0 {
                        term -= r * f.log_pdf(&x).unwrap().exp() * g.ln() * dx;
                    }
                }
                relaxed += q[(h, j)] * term;
            }
        }
        let entropy = entropy_sum(&q, &hyps);
        assert!((relaxed - entropy).abs() < 1e-4, "{relaxed} vs {entropy}");

        // The Bernoulli-Gaussian restriction can only raise the objective.
        let pooled: Vec<PooledHyp> = hyps.iter().map(|(r, g)| pooled(*r, g.mean[0], g.cov[(0, 0)])).collect();
        let red = m_step(&q, &pooled).unwrap();
        let c = cost_matrix(&pooled, &red).unwrap();
        assert!(c.component_mul(&q).sum() >= entropy - 1e-4);
    }
}
