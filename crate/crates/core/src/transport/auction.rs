//! Forward auction with ε-scaling for the transportation problem.
//!
//! Supplies are scaled to integers with a common denominator and every sink
//! owns `denominator` identical unit copies. Copies are tracked in lots
//! `(price, owner, amount)` so the work per bid does not depend on the
//! number of units. A source with unassigned units buys the most profitable
//! copies available and raises their price to keep ε-complementary
//! slackness, evicting whoever held them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct AuctionParams {
    pub eps_final: f64,
    pub denominator: i64,
    pub eps_factor: f64,
    pub max_bids: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuctionStats {
    pub phases: usize,
    pub bids: usize,
    /// Largest ε-complementary-slackness violation over assigned lots at exit,
    /// in cost units per unit of flow.
    pub cs_residual: f64,
    pub eps_final: f64,
}

#[derive(Debug, Clone)]
struct Lot {
    price: f64,
    owner: Option<usize>,
    amount: i64,
}

/// Returns integer flows `x[h][j]` (in units of `1/denominator`).
pub(crate) fn auction(
    cost: &DMatrix<f64>,
    supplies: &[i64],
    params: AuctionParams,
) -> Result<(Vec<Vec<i64>>, AuctionStats)> {
    let n_src = cost.nrows();
    let n_sink = cost.ncols();
    let mut stats = AuctionStats { eps_final: params.eps_final, ..Default::default() };

    let mut sinks: Vec<Vec<Lot>> =
        (0..n_sink).map(|_| vec![Lot { price: 0.0, owner: None, amount: params.denominator }]).collect();

    let (lo, hi) = cost.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    let range = if n_src == 0 || n_sink == 0 { 0.0 } else { hi - lo };
    let mut eps = (range / params.eps_factor).max(params.eps_final);

    let mut unassigned = vec![0i64; n_src];
    let mut queue = std::collections::VecDeque::new();
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();

    loop {
        stats.phases += 1;
        // Release every copy, keep prices.
        for lots in &mut sinks {
            for lot in lots.iter_mut() {
                lot.owner = None;
            }
            merge_lots(lots);
        }
        unassigned.copy_from_slice(supplies);
        queue.clear();
        queue.extend((0..n_src).filter(|&h| supplies[h] > 0));

        while let Some(h) = queue.pop_front() {
            let need = unassigned[h];
            if need == 0 {
                continue;
            }
            stats.bids += 1;
            if stats.bids > params.max_bids {
                return Err(Error::Numerical(format!(
                    "transport auction exceeded {} bids (eps {eps:e})",
                    params.max_bids
                )));
            }

            cand.clear();
            for (j, lots) in sinks.iter().enumerate() {
                let c = cost[(h, j)];
                for (k, lot) in lots.iter().enumerate() {
                    if lot.owner != Some(h) && lot.amount > 0 {
                        cand.push((-c - lot.price, j, k));
                    }
                }
            }
            // Most profitable first; ties by sink then lot order.
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

            let mut remaining = need;
            let mut takes: Vec<(usize, usize, i64)> = Vec::new();
            let mut next_profit = None;
            for &(profit, j, k) in &cand {
                if remaining == 0 {
                    next_profit = Some(profit);
                    break;
                }
                let avail = sinks[j][k].amount;
                let take = avail.min(remaining);
                remaining -= take;
                takes.push((j, k, take));
                if take < avail {
                    next_profit = Some(profit);
                    break;
                }
            }
            if remaining > 0 {
                return Err(Error::Numerical("transport auction ran out of copies".into()));
            }
            let worst_taken = takes
                .iter()
                .map(|&(j, k, _)| -cost[(h, j)] - sinks[j][k].price)
                .fold(f64::INFINITY, f64::min);
            let w = next_profit.unwrap_or(worst_taken);

            let mut gained = vec![0i64; n_sink];
            for &(j, k, take) in &takes {
                let lot = &mut sinks[j][k];
                lot.amount -= take;
                if let Some(prev) = lot.owner {
                    unassigned[prev] += take;
                    if unassigned[prev] == take {
                        queue.push_back(prev);
                    }
                }
                gained[j] += take;
            }
            for (j, &amount) in gained.iter().enumerate() {
                if amount == 0 {
                    continue;
                }
                let price = -cost[(h, j)] - w + eps;
                let lots = &mut sinks[j];
                lots.retain(|l| l.amount > 0);
                if let Some(l) = lots.iter_mut().find(|l| l.owner == Some(h) && l.price == price) {
                    l.amount += amount;
                } else {
                    lots.push(Lot { price, owner: Some(h), amount });
                }
            }
            unassigned[h] = 0;
        }

        if eps <= params.eps_final {
            break;
        }
        eps = (eps / params.eps_factor).max(params.eps_final);
    }

    let mut flows = vec![vec![0i64; n_sink]; n_src];
    for (j, lots) in sinks.iter().enumerate() {
        for lot in lots {
            if let Some(h) = lot.owner {
                flows[h][j] += lot.amount;
            }
        }
    }
    stats.cs_residual = cs_residual(cost, &sinks);
    Ok((flows, stats))
}

fn merge_lots(lots: &mut Vec<Lot>) {
    lots.retain(|l| l.amount > 0);
    lots.sort_by(|a, b| a.price.total_cmp(&b.price));
    let mut merged: Vec<Lot> = Vec::with_capacity(lots.len());
    for lot in lots.drain(..) {
        match merged.last_mut() {
            Some(last) if last.price == lot.price && last.owner == lot.owner => last.amount += lot.amount,
            _ => merged.push(lot),
        }
    }
    *lots = merged;
}

fn cs_residual(cost: &DMatrix<f64>, sinks: &[Vec<Lot>]) -> f64 {
    // Copies a source already holds are not alternatives for it.
    let cheapest_other = |h: usize, k: usize| {
        sinks[k]
            .iter()
            .filter(|l| l.amount > 0 && l.owner != Some(h))
            .map(|l| l.price)
            .fold(f64::INFINITY, f64::min)
    };
    let mut worst: f64 = 0.0;
    for (j, lots) in sinks.iter().enumerate() {
        for lot in lots.iter().filter(|l| l.amount > 0) {
            let Some(h) = lot.owner else { continue };
            let profit = -cost[(h, j)] - lot.price;
            let best = (0..sinks.len())
                .map(|k| -cost[(h, k)] - cheapest_other(h, k))
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(best - profit);
        }
    }
    worst
}
