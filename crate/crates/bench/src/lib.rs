//! Shared instance generators for the benchmarks.

use coalesce::{BernoulliGaussian, Gaussian, HypId, Hypothesis, Track, TrackId, TransportProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` tracks with `hyps` hypotheses each, scattered over a few units so
/// that the reduction has real work to do.
pub fn cluster(seed: u64, n: usize, hyps: usize) -> Vec<Track> {
    let mut r = rng(seed);
    let mut next = 0;
    (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..hyps).map(|_| r.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let hypotheses = w
                .iter()
                .map(|p| {
                    next += 1;
                    let mean = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), 0.0, 0.0];
                    let g = Gaussian::from_slices(&mean, &[1.0, 1.0, 0.1, 0.1]).unwrap();
                    Hypothesis {
                        id: HypId(next),
                        bernoulli: BernoulliGaussian::gaussian(r.random_range(0.3..1.0), g).unwrap(),
                        prob: p / total,
                    }
                })
                .collect();
            Track { id: TrackId(i as u64), hypotheses }
        })
        .collect()
}

/// Transport problem with `rows` equal supplies over `n` columns.
pub fn transport(seed: u64, rows: usize, n: usize) -> TransportProblem {
    let mut r = rng(seed);
    let cost = DMatrix::from_fn(rows, n, |_, _| r.random_range(0.0..50.0));
    TransportProblem::new(cost, vec![n as f64 / rows as f64; rows]).unwrap()
}

pub fn point_set(seed: u64, n: usize) -> Vec<DVector<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| DVector::from_fn(4, |_, _| r.random_range(-50.0..50.0))).collect()
}
