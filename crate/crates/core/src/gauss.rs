//! Small-dimension Gaussian primitives.
//!
//! Everything here works on dense `DVector`/`DMatrix` values. State
//! dimensions in this crate never exceed four, so dense storage with an
//! explicit symmetrization after each arithmetic step is the cheapest
//! representation that stays numerically clean.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;

/// Mean/covariance pair over the single-target state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian, checking dimensions, symmetry and positive definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let g = Self { mean, cov };
        g.validate()?;
        Ok(g)
    }

    /// Builds a Gaussian without validation. The covariance is symmetrized.
    pub fn new_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov: symmetrize(cov) }
    }

    pub fn from_slices(mean: &[f64], cov_diag: &[f64]) -> Result<Self> {
        if mean.len() != cov_diag.len() {
            return invalid_arg("mean and covariance diagonal differ in length");
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(cov_diag)),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if self.cov.nrows() != d || self.cov.ncols() != d {
            return invalid_arg(format!(
                "covariance is {}x{} but mean has dimension {d}",
                self.cov.nrows(),
                self.cov.ncols()
            ));
        }
        if !self.mean.iter().chain(self.cov.iter()).all(|v| v.is_finite()) {
            return invalid_arg("gaussian has non-finite entries");
        }
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return invalid_arg(format!("covariance not symmetric (max asymmetry {asym:e})"));
        }
        if Cholesky::new(self.cov.clone()).is_none() {
            return invalid_arg("covariance is not positive definite");
        }
        Ok(())
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let chol = cholesky(&self.cov)?;
        Ok(log_pdf_with(&chol, &(x - &self.mean)))
    }

    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        let chol = cholesky(&self.cov)?;
        let diff = x - &self.mean;
        Ok(diff.dot(&chol.solve(&diff)))
    }

    /// Moment-projection of the predicted measurement: `N(H m, H P Hᵀ + R)`.
    pub fn predicted_measurement(&self, model: &LinearGaussianModel) -> Result<Gaussian> {
        model.check_state_dim(self.dim())?;
        let mean = &model.h * &self.mean;
        let cov = symmetrize(&model.h * &self.cov * model.h.transpose() + &model.r);
        Ok(Gaussian { mean, cov })
    }
}

/// Linear-Gaussian transition and observation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianModel {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>, h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let m = Self { f, q, h, r };
        m.validate()?;
        Ok(m)
    }

    /// Nearly-constant-velocity model in two dimensions with state
    /// `(px, py, vx, vy)` and position-only measurements.
    pub fn constant_velocity_2d(q: f64, dt: f64, meas_var: f64) -> Self {
        let block_f = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let block_q = DMatrix::from_row_slice(
            2,
            2,
            &[dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt],
        ) * q;
        let eye2 = DMatrix::<f64>::identity(2, 2);
        let f = block_f.kronecker(&eye2);
        let q = block_q.kronecker(&eye2);
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        let r = eye2 * meas_var;
        Self { f, q, h, r }
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.f.nrows();
        let m = self.h.nrows();
        if self.f.ncols() != d || self.q.shape() != (d, d) || self.h.ncols() != d || self.r.shape() != (m, m) {
            return invalid_arg(format!(
                "inconsistent model shapes F{:?} Q{:?} H{:?} R{:?}",
                self.f.shape(),
                self.q.shape(),
                self.h.shape(),
                self.r.shape()
            ));
        }
        for (name, mat) in [("Q", &self.q), ("R", &self.r)] {
            let scale = mat.amax().max(f64::MIN_POSITIVE);
            if (mat - mat.transpose()).amax() > SYMMETRY_TOL * scale {
                return invalid_arg(format!("{name} is not symmetric"));
            }
            let eig = mat.clone().symmetric_eigenvalues();
            if eig.iter().any(|&e| e < -SYMMETRY_TOL * scale) {
                return invalid_arg(format!("{name} is not positive semidefinite"));
            }
        }
        Ok(())
    }

    fn check_state_dim(&self, d: usize) -> Result<()> {
        if self.f.nrows() != d || self.h.ncols() != d {
            return invalid_arg(format!(
                "state dimension {d} does not match model dimension {}",
                self.f.nrows()
            ));
        }
        Ok(())
    }
}

/// Kalman prediction: `(F m, F P Fᵀ + Q)`.
pub fn predict(g: &Gaussian, model: &LinearGaussianModel) -> Result<Gaussian> {
    model.check_state_dim(g.dim())?;
    let mean = &model.f * &g.mean;
    let cov = symmetrize(&model.f * &g.cov * model.f.transpose() + &model.q);
    Ok(Gaussian { mean, cov })
}

/// Kalman measurement update. Returns the posterior and `log N(z; H m, S)`.
pub fn update(g: &Gaussian, z: &DVector<f64>, model: &LinearGaussianModel) -> Result<(Gaussian, f64)> {
    model.check_state_dim(g.dim())?;
    if z.len() != model.meas_dim() {
        return invalid_arg(format!(
            "measurement has dimension {} but model expects {}",
            z.len(),
            model.meas_dim()
        ));
    }
    let innov = g.predicted_measurement(model)?;
    let chol = cholesky(&innov.cov)
        .map_err(|e| Error::Numerical(format!("innovation covariance: {e}")))?;
    let resid = z - &innov.mean;
    let log_lik = log_pdf_with(&chol, &resid);

    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let hp = &model.h * &g.cov;
    let gain = chol.solve(&hp).transpose();
    let mean = &g.mean + &gain * &resid;
    // Joseph form keeps the covariance PSD under rounding.
    let d = g.dim();
    let ikh = DMatrix::<f64>::identity(d, d) - &gain * &model.h;
    let cov = symmetrize(&ikh * &g.cov * ikh.transpose() + &gain * &model.r * gain.transpose());
    Ok((Gaussian { mean, cov }, log_lik))
}

/// Matches mean and covariance of a weighted Gaussian mixture.
pub fn moment_match(weights: &[f64], comps: &[Gaussian]) -> Result<Gaussian> {
    moment_match_iter(weights.iter().copied().zip(comps.iter()))
}

pub(crate) fn moment_match_iter<'a, I>(items: I) -> Result<Gaussian>
where
    I: IntoIterator<Item = (f64, &'a Gaussian)> + Clone,
{
    let mut total = 0.0;
    let mut dim = None;
    for (w, g) in items.clone() {
        if !(w >= 0.0) || !w.is_finite() {
            return invalid_arg(format!("mixture weight {w} is not a nonnegative number"));
        }
        match dim {
            None => dim = Some(g.dim()),
            Some(d) if d != g.dim() => return invalid_arg("mixture components differ in dimension"),
            _ => {}
        }
        total += w;
    }
    let Some(d) = dim else {
        return invalid_arg("empty mixture");
    };
    if total <= 0.0 {
        return invalid_arg("all mixture weights are zero");
    }
    let mut mean = DVector::zeros(d);
    for (w, g) in items.clone() {
        mean.axpy(w / total, &g.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (w, g) in items {
        if w == 0.0 {
            continue;
        }
        let v = &g.mean - &mean;
        cov += (&g.cov + &v * v.transpose()) * (w / total);
    }
    Ok(Gaussian { mean, cov: symmetrize(cov) })
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Cholesky factorization with a single diagonal jitter retry of
/// `1e-9 * trace / d`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows().max(1);
    let jitter = 1e-9 * m.trace().abs() / d as f64;
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += jitter.max(f64::MIN_POSITIVE);
    }
    Cholesky::new(jittered).ok_or_else(|| {
        Error::Numerical(format!("matrix not positive definite even after jitter {jitter:e}"))
    })
}

/// `log |2π Σ|` from a Cholesky factor.
pub fn log_det_2pi(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let d = l.nrows();
    let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    d as f64 * (2.0 * PI).ln() + log_det
}

fn log_pdf_with(chol: &Cholesky<f64, Dyn>, diff: &DVector<f64>) -> f64 {
    let maha = diff.dot(&chol.solve(diff));
    -0.5 * (maha + log_det_2pi(chol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_model(f: f64, q: f64, h: f64, r: f64) -> LinearGaussianModel {
        LinearGaussianModel::new(
            DMatrix::from_element(1, 1, f),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    fn scalar(m: f64, v: f64) -> Gaussian {
        Gaussian::from_slices(&[m], &[v]).unwrap()
    }

    #[test]
    fn predict_identity_dynamics() {
        let g = Gaussian::from_slices(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let eye = DMatrix::identity(2, 2);
        let model = LinearGaussianModel::new(eye.clone(), DMatrix::zeros(2, 2), eye.clone(), eye).unwrap();
        let p = predict(&g, &model).unwrap();
        assert_eq!(p, g);
    }

    #[test]
    fn predict_scalar() {
        let p = predict(&scalar(1.0, 1.0), &scalar_model(2.0, 3.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(p.mean[0], 2.0);
        assert_relative_eq!(p.cov[(0, 0)], 7.0);
    }

    #[test]
    fn predict_constant_velocity_from_zero() {
        let model = LinearGaussianModel::constant_velocity_2d(0.01, 1.0, 1.0);
        let g = Gaussian::new_unchecked(DVector::zeros(4), DMatrix::zeros(4, 4));
        let p = predict(&g, &model).unwrap();
        assert_eq!(p.mean, DVector::zeros(4));
        assert_relative_eq!(p.cov, model.q, epsilon = 1e-15);
        assert_relative_eq!(model.q[(0, 0)], 0.01 / 3.0);
        assert_relative_eq!(model.q[(0, 2)], 0.005);
        assert_relative_eq!(model.q[(2, 2)], 0.01);
        assert_eq!(model.q[(0, 1)], 0.0);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = LinearGaussianModel::constant_velocity_2d(0.01, 1.0, 1.0);
        assert!(matches!(predict(&scalar(0.0, 1.0), &model), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn update_scalar() {
        let (post, ll) = update(&scalar(0.0, 1.0), &DVector::from_element(1, 0.0), &scalar_model(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(post.mean[0], 0.0);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(ll, -0.5 * (2.0 * PI * 2.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn update_uninformative_measurement() {
        let prior = Gaussian::from_slices(&[1.0, -2.0], &[2.0, 3.0]).unwrap();
        let eye = DMatrix::identity(2, 2);
        let model = LinearGaussianModel::new(eye.clone(), DMatrix::zeros(2, 2), eye.clone(), eye * 1e12).unwrap();
        let (post, _) = update(&prior, &DVector::from_vec(vec![50.0, 50.0]), &model).unwrap();
        assert_relative_eq!(post.mean, prior.mean, max_relative = 1e-6);
        assert_relative_eq!(post.cov, prior.cov, max_relative = 1e-6);
    }

    #[test]
    fn update_dogmatic_prior() {
        let (post, _) = update(&scalar(0.0, 1e-12), &DVector::from_element(1, 5.0), &scalar_model(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert!(post.mean[0].abs() < 1e-6);
    }

    #[test]
    fn update_rejects_wrong_measurement_dim() {
        let model = LinearGaussianModel::constant_velocity_2d(0.01, 1.0, 1.0);
        let g = Gaussian::from_slices(&[0.0; 4], &[1.0; 4]).unwrap();
        assert!(update(&g, &DVector::zeros(3), &model).is_err());
    }

    #[test]
    fn moment_match_examples() {
        let g = scalar(3.0, 2.0);
        assert_eq!(moment_match(&[1.0], std::slice::from_ref(&g)).unwrap(), g);

        let mm = moment_match(&[0.5, 0.5], &[scalar(-1.0, 1.0), scalar(1.0, 1.0)]).unwrap();
        assert_relative_eq!(mm.mean[0], 0.0);
        assert_relative_eq!(mm.cov[(0, 0)], 2.0);

        let mm = moment_match(&[0.1 / 0.4, 0.3 / 0.4], &[scalar(0.0, 1.0), scalar(2.0, 1.0)]).unwrap();
        assert_relative_eq!(mm.mean[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(mm.cov[(0, 0)], 1.75, epsilon = 1e-12);
    }

    #[test]
    fn moment_match_rejects_zero_weights() {
        let err = moment_match(&[0.0, 0.0], &[scalar(0.0, 1.0), scalar(1.0, 1.0)]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn moment_match_agrees_with_sampling() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        // Two-dimensional three-component mixture; the sampling oracle draws
        // a component then a point and accumulates raw moments.
        let comps = vec![
            Gaussian::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap(),
            Gaussian::new(DVector::from_vec(vec![3.0, -1.0]), DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.0, 2.0])).unwrap(),
            Gaussian::new(DVector::from_vec(vec![-2.0, 0.5]), DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0])).unwrap(),
        ];
        let weights = [0.2, 0.5, 0.3];
        let mm = moment_match(&weights, &comps).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let chols: Vec<_> = comps.iter().map(|g| cholesky(&g.cov).unwrap().l()).collect();
        let n = 1_000_000usize;
        let mut sum = DVector::<f64>::zeros(2);
        let mut sum2 = DMatrix::<f64>::zeros(2, 2);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rand::Rng::random(&mut rng);
            let k = if u < 0.2 { 0 } else if u < 0.7 { 1 } else { 2 };
            let e = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let x = &comps[k].mean + &chols[k] * e;
            sum += &x;
            sum2 += &x * x.transpose();
            samples.push(x);
        }
        let mean = &sum / n as f64;
        let cov = &sum2 / n as f64 - &mean * mean.transpose();
        for i in 0..2 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((mean[i] - mm.mean[i]).abs() < 3.0 * se, "mean[{i}]");
        }
        // Standard error of each covariance entry from the sample fourth moments.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                let mut acc2 = 0.0;
                for x in &samples {
                    let v = (x[i] - mean[i]) * (x[j] - mean[j]);
                    acc += v;
                    acc2 += v * v;
                }
                let m = acc / n as f64;
                let se = ((acc2 / n as f64 - m * m) / n as f64).sqrt();
                assert!((cov[(i, j)] - mm.cov[(i, j)]).abs() < 3.0 * se, "cov[{i},{j}]");
            }
        }
    }

    fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (prop::collection::vec(-2.0f64..2.0, d * d), 0.05f64..1.0).prop_map(move |(v, eps)| {
            let a = DMatrix::from_vec(d, d, v);
            &a * a.transpose() + DMatrix::identity(d, d) * eps
        })
    }

    fn gaussian_and_model() -> impl Strategy<Value = (Gaussian, LinearGaussianModel, DVector<f64>)> {
        (1usize..=4).prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0f64..5.0, d),
                spd(d),
                prop::collection::vec(-1.5f64..1.5, d * d),
                spd(d),
                1usize..=d,
            )
                .prop_flat_map(move |(m, p, f, q, md)| {
                    (
                        Just((m.clone(), p.clone(), f.clone(), q.clone(), md)),
                        prop::collection::vec(-2.0f64..2.0, md * d),
                        spd(md),
                        prop::collection::vec(-5.0f64..5.0, md),
                    )
                })
                .prop_map(move |((m, p, f, q, md), h, r, z)| {
                    let g = Gaussian::new_unchecked(DVector::from_vec(m), p);
                    let model = LinearGaussianModel {
                        f: DMatrix::from_vec(d, d, f),
                        q,
                        h: DMatrix::from_vec(md, d, h),
                        r,
                    };
                    (g, model, DVector::from_vec(z))
                })
        })
    }

    proptest! {
        #[test]
        fn predict_and_update_preserve_spd((g, model, z) in gaussian_and_model()) {
            let p = predict(&g, &model).unwrap();
            prop_assert!(p.validate().is_ok());
            let (post, ll) = update(&p, &z, &model).unwrap();
            prop_assert!(ll.is_finite());
            prop_assert!(post.validate().is_ok());
        }

        #[test]
        fn moment_match_dominates_weighted_covariance(
            w in prop::collection::vec(0.01f64..1.0, 1..5),
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let comps: Vec<Gaussian> = w.iter().map(|_| {
                let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
                Gaussian::new_unchecked(
                    DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0)),
                    &a * a.transpose() + DMatrix::identity(3, 3) * 0.1,
                )
            }).collect();
            let mm = moment_match(&w, &comps).unwrap();
            let mut within = DMatrix::zeros(3, 3);
            for (wi, g) in w.iter().zip(&comps) {
                within += &g.cov * *wi;
            }
            let spread = symmetrize(&mm.cov - within);
            let min_eig = spread.symmetric_eigenvalues().min();
            prop_assert!(min_eig > -1e-10);
        }
    }
}
