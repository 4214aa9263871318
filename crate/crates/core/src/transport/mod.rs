//! Transportation linear program and linear assignment solvers.
//!
//! The transportation problem has `|H|` supply rows with supplies `p_h` and
//! `N` demand columns that each require one unit:
//!
//! ```text
//! minimize   Σ_h Σ_j C(h, j) q(h, j)
//! subject to Σ_h q(h, j) = 1,  Σ_j q(h, j) = p_h,  q ≥ 0
//! ```

mod assignment;
mod auction;
mod ssp;

use nalgebra::DMatrix;

pub use assignment::{solve_assignment, Assignment};
pub(crate) use assignment::hungarian;
pub use auction::AuctionStats;

use crate::error::{invalid_arg, Result};

/// Relative ε used when the caller does not pick one: `1e-9 · cost range`.
pub const DEFAULT_EPS_REL: f64 = 1e-9;
/// Supplies are rounded to multiples of `1 / SUPPLY_DENOMINATOR`.
pub const SUPPLY_DENOMINATOR: i64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    /// `|H| x N` cost matrix.
    pub cost: DMatrix<f64>,
    /// Row supplies `p_h`; they must sum to `N`.
    pub supplies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub q: DMatrix<f64>,
    pub objective: f64,
    /// Dual prices of the demand columns (empty for the auction).
    pub column_prices: Vec<f64>,
    /// Set by the auction solver only.
    pub stats: Option<AuctionStats>,
}

impl TransportProblem {
    pub fn new(cost: DMatrix<f64>, supplies: Vec<f64>) -> Result<Self> {
        let p = Self { cost, supplies };
        p.validate()?;
        Ok(p)
    }

    pub fn demands(&self) -> usize {
        self.cost.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.nrows() != self.supplies.len() {
            return invalid_arg(format!(
                "cost has {} rows but {} supplies were given",
                self.cost.nrows(),
                self.supplies.len()
            ));
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return invalid_arg("transport costs must be finite");
        }
        if self.supplies.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid_arg("supplies must be finite and nonnegative");
        }
        let n = self.demands() as f64;
        let total: f64 = self.supplies.iter().sum();
        if (total - n).abs() > 1e-9 * n.max(1.0) {
            return invalid_arg(format!("supplies sum to {total} but demand is {n}"));
        }
        Ok(())
    }

    /// `1e-9` times the spread of the cost matrix (at least `1e-12`).
    pub fn default_eps(&self) -> f64 {
        let (lo, hi) = self
            .cost
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        let spread = if hi > lo { hi - lo } else { 0.0 };
        (DEFAULT_EPS_REL * spread.max(hi.abs()).max(lo.abs())).max(1e-12)
    }

    pub fn objective(&self, q: &DMatrix<f64>) -> f64 {
        self.cost.component_mul(q).sum()
    }
}

/// Solves the transportation problem exactly by successive shortest paths.
/// Supplies stay real-valued; the plan is optimal up to floating-point error.
pub fn solve_transport(problem: &TransportProblem) -> Result<TransportPlan> {
    solve_transport_warm(problem, None)
}

/// As [`solve_transport`], seeded with column prices from an earlier plan
/// (`TransportPlan::column_prices`). Helps when costs change a little
/// between calls; the result is optimal either way.
pub fn solve_transport_warm(problem: &TransportProblem, prices: Option<&[f64]>) -> Result<TransportPlan> {
    problem.validate()?;
    let n_rows = problem.cost.nrows();
    let n = problem.demands();
    if n == 0 {
        return Ok(TransportPlan { q: DMatrix::zeros(n_rows, 0), objective: 0.0, column_prices: vec![], stats: None });
    }
    let live: Vec<usize> = (0..n_rows).filter(|&h| problem.supplies[h] > 0.0).collect();
    let cost = DMatrix::from_fn(live.len(), n, |i, j| problem.cost[(live[i], j)]);
    let supplies: Vec<f64> = live.iter().map(|&h| problem.supplies[h]).collect();
    let out = ssp::min_cost_flow(&cost, &supplies, prices)?;
    log::trace!("transport {}x{} solved in {} rounds", cost.nrows(), n, out.rounds);
    let mut q = DMatrix::zeros(n_rows, n);
    for (i, &h) in live.iter().enumerate() {
        q.row_mut(h).copy_from(&out.flow.row(i));
    }
    let objective = problem.objective(&q);
    Ok(TransportPlan { q, objective, column_prices: out.sink_prices, stats: None })
}

/// Solves the transportation problem with the forward ε-scaling auction.
/// The returned objective is within `N · eps_final` of the optimum (plus
/// the supply rounding to `1 / SUPPLY_DENOMINATOR`).
///
/// The bid count grows with the supply resolution, and instances with one
/// large cheap lot shared by several rows can exhaust the bid budget; prefer
/// [`solve_transport`] unless the auction statistics are wanted.
pub fn solve_transport_auction(problem: &TransportProblem, eps_final: f64) -> Result<TransportPlan> {
    problem.validate()?;
    if !(eps_final > 0.0) {
        return invalid_arg("eps_final must be positive");
    }
    let n_rows = problem.cost.nrows();
    let n = problem.demands();
    if n == 0 {
        return Ok(TransportPlan {
            q: DMatrix::zeros(n_rows, 0),
            objective: 0.0,
            column_prices: vec![],
            stats: Some(AuctionStats::default()),
        });
    }

    // Zero-supply rows carry no mass; drop them.
    let live: Vec<usize> = (0..n_rows).filter(|&h| problem.supplies[h] > 0.0).collect();
    let scaled = scale_supplies(&live.iter().map(|&h| problem.supplies[h]).collect::<Vec<_>>(), n);
    let cost = DMatrix::from_fn(live.len(), n, |i, j| problem.cost[(live[i], j)]);

    let params = auction::AuctionParams {
        eps_final,
        denominator: SUPPLY_DENOMINATOR,
        eps_factor: 4.0,
        max_bids: 5_000_000,
    };
    let (flows, stats) = auction::auction(&cost, &scaled, params)?;

    let mut q = DMatrix::zeros(n_rows, n);
    for (i, &h) in live.iter().enumerate() {
        for j in 0..n {
            q[(h, j)] = flows[i][j] as f64 / SUPPLY_DENOMINATOR as f64;
        }
    }
    let objective = problem.objective(&q);
    Ok(TransportPlan { q, objective, column_prices: vec![], stats: Some(stats) })
}

/// Rounds supplies to integer multiples of the denominator so that they sum
/// to exactly `n · denominator`; leftover units go to the largest remainders.
fn scale_supplies(supplies: &[f64], n: usize) -> Vec<i64> {
    let total: f64 = supplies.iter().sum();
    let target = n as i64 * SUPPLY_DENOMINATOR;
    let exact: Vec<f64> =
        supplies.iter().map(|p| p / total * n as f64 * SUPPLY_DENOMINATOR as f64).collect();
    let mut scaled: Vec<i64> = exact.iter().map(|x| x.floor() as i64).collect();
    let mut short = target - scaled.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..supplies.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut k = 0;
    while short > 0 && !order.is_empty() {
        scaled[order[k % order.len()]] += 1;
        short -= 1;
        k += 1;
    }
    while short < 0 {
        let i = order[k % order.len()];
        if scaled[i] > 0 {
            scaled[i] -= 1;
            short += 1;
        }
        k += 1;
    }
    scaled
}
