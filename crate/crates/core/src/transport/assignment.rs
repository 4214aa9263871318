//! Exact linear assignment by shortest augmenting paths (Hungarian method
//! with row/column potentials).

use nalgebra::DMatrix;

use crate::error::{invalid_arg, Result};

/// Optimal permutation of a square assignment problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[i]` is the column assigned to row `i`.
    pub perm: Vec<usize>,
    pub value: f64,
}

/// Minimizes `Σ_i cost(i, π(i))` over permutations `π`.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Result<Assignment> {
    if cost.nrows() != cost.ncols() {
        return invalid_arg(format!("assignment matrix is {}x{}, not square", cost.nrows(), cost.ncols()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return invalid_arg("assignment matrix has non-finite entries");
    }
    let n = cost.nrows();
    let perm = hungarian(n, n, |i, j| cost[(i, j)]).expect("finite square problem is always feasible");
    let value = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(Assignment { perm, value })
}

/// Rectangular minimum-cost assignment of every row to a distinct column
/// (`rows <= cols`). Entries equal to `f64::INFINITY` are forbidden.
/// Returns `None` when no finite-cost assignment exists.
pub(crate) fn hungarian<F>(rows: usize, cols: usize, cost: F) -> Option<Vec<usize>>
where
    F: Fn(usize, usize) -> f64,
{
    assert!(rows <= cols, "hungarian needs rows <= cols");
    if rows == 0 {
        return Some(Vec::new());
    }
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![f64::INFINITY; cols + 1];
    let mut used = vec![false; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let c = cost(i0 - 1, j - 1);
                if c.is_finite() {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX || !delta.is_finite() {
                return None;
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            perm[owner[j] - 1] = j - 1;
        }
    }
    Some(perm)
}
