//! OSPA distance between finite point sets, normalized and unnormalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::transport::solve_assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    pub p: f64,
    pub c: f64,
    /// Coordinates entering the base Euclidean distance. `None` uses all.
    pub mask: Option<Vec<usize>>,
}

impl OspaParams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        let params = Self { p, c, mask: None };
        params.validate()?;
        Ok(params)
    }

    /// Position-only distance for `(x, y, vx, vy)` states.
    pub fn position_2d(p: f64, c: f64) -> Result<Self> {
        let params = Self { p, c, mask: Some(vec![0, 1]) };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return invalid_arg(format!("OSPA order must be >= 1, got {}", self.p));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return invalid_arg(format!("OSPA cutoff must be positive, got {}", self.c));
        }
        Ok(())
    }

    pub fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match &self.mask {
            Some(m) => m.iter().map(|&i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt(),
            None => (x - y).norm(),
        }
    }

    fn cut_cost(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.distance(x, y).min(self.c).powf(self.p)
    }
}

fn check_dims(x: &[DVector<f64>], y: &[DVector<f64>], params: &OspaParams) -> Result<()> {
    params.validate()?;
    let mut dims = x.iter().chain(y).map(|v| v.len());
    if let Some(d) = dims.next() {
        if dims.any(|e| e != d) {
            return invalid_arg("OSPA points differ in dimension");
        }
        if let Some(m) = &params.mask {
            if m.iter().any(|&i| i >= d) {
                return invalid_arg("OSPA coordinate mask exceeds point dimension");
            }
        }
    }
    Ok(())
}

/// `Σ_matched d_c^p + c^p (n - m)` minimized over assignments, with `n ≥ m`.
fn total_cost(x: &[DVector<f64>], y: &[DVector<f64>], params: &OspaParams) -> Result<f64> {
    check_dims(x, y, params)?;
    let (big, small) = if x.len() >= y.len() { (x, y) } else { (y, x) };
    let n = big.len();
    if n == 0 {
        return Ok(0.0);
    }
    let pad = params.c.powf(params.p);
    let cost = DMatrix::from_fn(n, n, |i, j| if j < small.len() { params.cut_cost(&big[i], &small[j]) } else { pad });
    Ok(solve_assignment(&cost)?.value)
}

/// OSPA of order `p` with cutoff `c`.
pub fn ospa(x: &[DVector<f64>], y: &[DVector<f64>], params: &OspaParams) -> Result<f64> {
    let n = x.len().max(y.len());
    if n == 0 {
        check_dims(x, y, params)?;
        return Ok(0.0);
    }
    Ok((total_cost(x, y, params)? / n as f64).max(0.0).powf(1.0 / params.p))
}

/// OSPA without the `1/n` normalization, so that it adds over targets.
pub fn ospa_modified(x: &[DVector<f64>], y: &[DVector<f64>], params: &OspaParams) -> Result<f64> {
    Ok(total_cost(x, y, params)?.max(0.0).powf(1.0 / params.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn examples() {
        let p1 = OspaParams::new(1.0, 20.0).unwrap();
        assert_eq!(ospa(&[], &[], &p1).unwrap(), 0.0);
        assert_eq!(ospa(&pts(&[3.0]), &[], &p1).unwrap(), 20.0);
        assert_relative_eq!(ospa(&pts(&[0.0, 10.0]), &pts(&[1.0, 12.0]), &p1).unwrap(), 1.5);
        assert_relative_eq!(ospa_modified(&pts(&[0.0, 10.0]), &pts(&[1.0, 12.0]), &p1).unwrap(), 3.0);
        let p2 = OspaParams::new(2.0, 20.0).unwrap();
        assert_relative_eq!(ospa_modified(&pts(&[0.0]), &pts(&[100.0]), &p2).unwrap(), 20.0);
        assert_relative_eq!(ospa_modified(&pts(&[0.0, 0.0, 0.0]), &pts(&[0.0]), &p1).unwrap(), 40.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(OspaParams::new(0.5, 1.0).is_err());
        assert!(OspaParams::new(1.0, 0.0).is_err());
        let p = OspaParams::new(1.0, 1.0).unwrap();
        let a = vec![DVector::from_element(1, 0.0)];
        let b = vec![DVector::from_element(2, 0.0)];
        assert!(ospa(&a, &b, &p).is_err());
        let masked = OspaParams::position_2d(1.0, 1.0).unwrap();
        assert!(ospa(&a, &a, &masked).is_err());
    }

    #[test]
    fn position_mask_ignores_velocity() {
        let p = OspaParams::position_2d(1.0, 20.0).unwrap();
        let a = vec![DVector::from_vec(vec![0.0, 0.0, 5.0, 5.0])];
        let b = vec![DVector::from_vec(vec![3.0, 4.0, -5.0, 0.0])];
        assert_relative_eq!(ospa(&a, &b, &p).unwrap(), 5.0);
    }
}
