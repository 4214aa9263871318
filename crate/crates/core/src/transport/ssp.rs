//! Successive shortest paths on the bipartite transport network.
//!
//! Sources are the supply rows, sinks are the unit-demand columns. Flows stay
//! real-valued, so no rounding of the supplies is needed. Johnson potentials
//! keep the reduced costs nonnegative. Each round runs Dijkstra from every
//! source with supply left, ordering only the sinks.

use nalgebra::DMatrix;

use crate::error::{numerical, Result};

/// Remaining supply or demand below this is treated as exhausted.
const MASS_TOL: f64 = 1e-13;
/// Relative reduced cost treated as zero when pushing flow directly.
const TIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq)]
enum Pred {
    None,
    /// Sink reached from this source over a forward edge.
    Source(usize),
    /// Source reached from this sink by cancelling flow.
    Sink(usize),
}

pub(crate) struct Flow {
    pub flow: DMatrix<f64>,
    /// Sink potentials at termination; a good warm start for nearby costs.
    pub sink_prices: Vec<f64>,
    pub rounds: usize,
}

/// Optimal flow. `prices` seeds the sink potentials; source potentials are
/// then the tightest feasible ones, so any prices are valid.
pub(crate) fn min_cost_flow(cost: &DMatrix<f64>, supplies: &[f64], prices: Option<&[f64]>) -> Result<Flow> {
    let (rows, cols) = cost.shape();
    let total: f64 = supplies.iter().sum();
    let mut supply: Vec<f64> = supplies.iter().map(|p| p / total * cols as f64).collect();
    let mut demand = vec![1.0; cols];
    let mut flow = DMatrix::<f64>::zeros(rows, cols);

    let mut pot_snk = match prices {
        Some(p) if p.len() == cols && p.iter().all(|v| v.is_finite()) => p.to_vec(),
        _ => vec![0.0; cols],
    };
    // Every source gets at least one tight edge.
    let mut pot_src: Vec<f64> = (0..rows)
        .map(|h| -(0..cols).map(|j| cost[(h, j)] - pot_snk[j]).fold(f64::INFINITY, f64::min))
        .collect();
    push_tight(cost, &pot_src, &pot_snk, &mut supply, &mut demand, &mut flow);

    let mut dist_src = vec![0.0; rows];
    let mut dist_snk = vec![0.0; cols];
    let mut pred_src = vec![Pred::None; rows];
    let mut pred_snk = vec![Pred::None; cols];
    let mut done_snk = vec![false; cols];

    let max_rounds = 64 * (rows + cols) * (rows + cols) + 64;
    let mut rounds = 0;
    while demand.iter().any(|&d| d > MASS_TOL) && supply.iter().any(|&p| p > MASS_TOL) {
        rounds += 1;
        if rounds > max_rounds {
            return numerical("transport shortest-path solver did not converge");
        }
        dist_snk.fill(f64::INFINITY);
        pred_snk.fill(Pred::None);
        done_snk.fill(false);
        pred_src.fill(Pred::None);
        for (d, &s) in dist_src.iter_mut().zip(&supply) {
            *d = if s > MASS_TOL { 0.0 } else { f64::INFINITY };
        }
        for (h, &d) in dist_src.iter().enumerate() {
            if d == 0.0 {
                relax(h, 0.0, cost, &pot_src, &pot_snk, &done_snk, &mut dist_snk, &mut pred_snk);
            }
        }

        // Only sinks need ordering: a source is reached through a flow edge,
        // whose reduced cost is zero, so its first label is final.
        let target = loop {
            let mut best = f64::INFINITY;
            let mut pick = usize::MAX;
            for j in 0..cols {
                if !done_snk[j] && dist_snk[j] < best {
                    best = dist_snk[j];
                    pick = j;
                }
            }
            if pick == usize::MAX {
                break pick;
            }
            let j = pick;
            done_snk[j] = true;
            if demand[j] > MASS_TOL {
                break j;
            }
            for h in 0..rows {
                if dist_src[h] < f64::INFINITY || flow[(h, j)] <= MASS_TOL {
                    continue;
                }
                let d = best + (-cost[(h, j)] + pot_snk[j] - pot_src[h]).max(0.0);
                dist_src[h] = d;
                pred_src[h] = Pred::Sink(j);
                relax(h, d, cost, &pot_src, &pot_snk, &done_snk, &mut dist_snk, &mut pred_snk);
            }
        };

        if target == usize::MAX {
            // Only rounding dust can be stranded here.
            if demand.iter().sum::<f64>() > 1e-9 * cols as f64 {
                return numerical("transport network has no augmenting path");
            }
            break;
        }
        let d_t = dist_snk[target];
        for h in 0..rows {
            pot_src[h] += dist_src[h].min(d_t);
        }
        for j in 0..cols {
            pot_snk[j] += dist_snk[j].min(d_t);
        }

        // Bottleneck along the path back to the originating source.
        let mut amount = demand[target];
        let mut j = target;
        let origin = loop {
            let Pred::Source(h) = pred_snk[j] else { unreachable!() };
            match pred_src[h] {
                Pred::Sink(prev) => {
                    amount = amount.min(flow[(h, prev)]);
                    j = prev;
                }
                _ => break h,
            }
        };
        amount = amount.min(supply[origin]);

        let mut j = target;
        loop {
            let Pred::Source(h) = pred_snk[j] else { unreachable!() };
            flow[(h, j)] += amount;
            match pred_src[h] {
                Pred::Sink(prev) => {
                    flow[(h, prev)] = (flow[(h, prev)] - amount).max(0.0);
                    j = prev;
                }
                _ => break,
            }
        }
        supply[origin] -= amount;
        demand[target] -= amount;
        push_tight(cost, &pot_src, &pot_snk, &mut supply, &mut demand, &mut flow);
    }

    // Put the last few ulps of rounding back on the rows.
    for (h, &p) in supplies.iter().enumerate() {
        let s: f64 = flow.row(h).sum();
        if s > 0.0 {
            flow.row_mut(h).scale_mut(p / s);
        }
    }
    Ok(Flow { flow, sink_prices: pot_snk, rounds })
}

/// Routes leftover supply straight to unfilled sinks over edges whose reduced
/// cost is zero. This keeps the optimality conditions and retires most
/// sources without a shortest-path search.
fn push_tight(
    cost: &DMatrix<f64>,
    pot_src: &[f64],
    pot_snk: &[f64],
    supply: &mut [f64],
    demand: &mut [f64],
    flow: &mut DMatrix<f64>,
) {
    let (rows, cols) = cost.shape();
    for h in 0..rows {
        if supply[h] <= MASS_TOL {
            continue;
        }
        for j in 0..cols {
            if demand[j] <= MASS_TOL {
                continue;
            }
            let c = cost[(h, j)];
            let rc = c + pot_src[h] - pot_snk[j];
            if rc <= TIGHT_TOL * (1.0 + c.abs()) {
                let amount = supply[h].min(demand[j]);
                flow[(h, j)] += amount;
                supply[h] -= amount;
                demand[j] -= amount;
                if supply[h] <= MASS_TOL {
                    break;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn relax(
    h: usize,
    d: f64,
    cost: &DMatrix<f64>,
    pot_src: &[f64],
    pot_snk: &[f64],
    done_snk: &[bool],
    dist_snk: &mut [f64],
    pred_snk: &mut [Pred],
) {
    for j in 0..dist_snk.len() {
        if done_snk[j] {
            continue;
        }
        let nd = d + (cost[(h, j)] + pot_src[h] - pot_snk[j]).max(0.0);
        if nd < dist_snk[j] {
            dist_snk[j] = nd;
            pred_snk[j] = Pred::Source(h);
        }
    }
}
