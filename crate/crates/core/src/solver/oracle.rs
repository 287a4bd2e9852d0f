//! Exhaustive reference solver for small integer clearing instances.
//!
//! Verification aid: it shares no machinery with the production solver.
//! Because every non-grid arc out of seller `s` carries the same
//! coefficient, the objective depends on the allocation only through each
//! seller's total local delivery `f_s`, so the oracle enumerates every
//! integer vector `f` directly, checks feasibility against the
//! connectivity via the Gale-Hoffman condition (all seller subsets must
//! fit inside their reachable demand), and ranks candidates by grid flow
//! first, then local cost — the meaning big-M encodes. A tiny augmenting
//! max-flow expands the winning totals into a concrete allocation.

use super::{AllocationMatrix, ConnectivityMatrix, CostMatrix, SolverError};

/// Hard limits keeping the search space honest for a brute-force tool.
const MAX_SIDE: usize = 4;
const MAX_QUANTITY: f64 = 64.0;
const MAX_CANDIDATES: u64 = 2_000_000;
const INTEGRALITY_TOL: f64 = 1e-9;

fn as_integer_kwh(side: &'static str, values: &[f64]) -> Result<Vec<i64>, SolverError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() || value <= 0.0 {
                return Err(SolverError::InvalidQuantity { side, index, value });
            }
            if value > MAX_QUANTITY {
                return Err(SolverError::OracleRefused(format!(
                    "{side} quantity {value} exceeds {MAX_QUANTITY} kWh"
                )));
            }
            let rounded = value.round();
            if (value - rounded).abs() > INTEGRALITY_TOL {
                return Err(SolverError::OracleRefused(format!(
                    "{side} quantity {value} is not integer kWh"
                )));
            }
            Ok(rounded as i64)
        })
        .collect()
}

/// Max flow shipping exactly `f[s]` from each seller into buyers capped at
/// `demands[b]`, over the permitted arcs. Returns per-arc flows, or `None`
/// when the totals cannot be routed.
fn route_totals(f: &[i64], demands: &[i64], cm: &ConnectivityMatrix) -> Option<Vec<Vec<i64>>> {
    let ns = f.len();
    let nb = demands.len();
    let mut flow = vec![vec![0i64; ns]; nb];
    let mut remaining_demand = demands.to_vec();
    for s in 0..ns {
        let mut remaining = f[s];
        while remaining > 0 {
            // Search for an alternating path from seller s to a buyer with
            // residual demand; labels record each node's predecessor.
            let mut buyer_from = vec![usize::MAX; nb];
            let mut seller_from = vec![usize::MAX; ns];
            let mut seller_seen = vec![false; ns];
            let mut queue = vec![s];
            seller_seen[s] = true;
            let mut target = None;
            'search: while let Some(cur) = queue.pop() {
                for b in 0..nb {
                    if buyer_from[b] != usize::MAX || !cm.connected(b, cur) {
                        continue;
                    }
                    buyer_from[b] = cur;
                    if remaining_demand[b] > 0 {
                        target = Some(b);
                        break 'search;
                    }
                    for s2 in 0..ns {
                        if !seller_seen[s2] && flow[b][s2] > 0 {
                            seller_seen[s2] = true;
                            seller_from[s2] = b;
                            queue.push(s2);
                        }
                    }
                }
            }
            // Shift one unit along the path; quantities are tiny so unit
            // augmentation is fine.
            let mut b = target?;
            remaining_demand[b] -= 1;
            loop {
                let via = buyer_from[b];
                flow[b][via] += 1;
                if via == s {
                    break;
                }
                let prev = seller_from[via];
                flow[prev][via] -= 1;
                b = prev;
            }
            remaining -= 1;
        }
    }
    Some(flow)
}

/// Solves a small integer instance by exhaustive search. Refuses anything
/// beyond 4 buyers/sellers, non-integer quantities, or cost matrices that
/// are not seller-constant with a uniform grid penalty, since those are
/// outside the structure the enumeration exploits.
pub fn brute_force_allocation(
    buyer_demands: &[f64],
    seller_supplies: &[f64],
    costs: &CostMatrix,
    cm: &ConnectivityMatrix,
) -> Result<AllocationMatrix, SolverError> {
    let nb = buyer_demands.len();
    let ns = seller_supplies.len();
    if nb > MAX_SIDE || ns > MAX_SIDE {
        return Err(SolverError::OracleRefused(format!(
            "instance is {nb}x{ns}, limit is {MAX_SIDE} per side"
        )));
    }
    if cm.n_buyers() != nb || cm.n_sellers() != ns {
        return Err(SolverError::DimensionMismatch(format!(
            "connectivity is {}x{}, offers are {nb}x{ns}",
            cm.n_buyers(),
            cm.n_sellers()
        )));
    }
    if costs.n_rows() != nb + 1 || costs.n_cols() != ns + 1 {
        return Err(SolverError::DimensionMismatch(format!(
            "cost matrix is {}x{}, expected {}x{}",
            costs.n_rows(),
            costs.n_cols(),
            nb + 1,
            ns + 1
        )));
    }
    let mut etas = Vec::with_capacity(ns);
    for s in 0..ns {
        let eta = costs.entries[0][s];
        for b in 0..nb {
            if (costs.entries[b][s] - eta).abs() > 1e-12 {
                return Err(SolverError::OracleRefused(format!(
                    "cost column {s} is not seller-constant"
                )));
            }
        }
        etas.push(eta);
    }

    let demands = as_integer_kwh("buyer", buyer_demands)?;
    let supplies = as_integer_kwh("seller", seller_supplies)?;
    let candidates: u64 = supplies.iter().map(|&s| s as u64 + 1).product();
    if candidates > MAX_CANDIDATES {
        return Err(SolverError::OracleRefused(format!(
            "{candidates} candidate vectors exceed the search budget"
        )));
    }

    let total_demand: i64 = demands.iter().sum();
    let total_supply: i64 = supplies.iter().sum();

    // Gale-Hoffman: totals f are routable iff for every seller subset T,
    // sum_T f_s <= total demand of the buyers reachable from T.
    let mut subset_cap = vec![0i64; 1 << ns];
    for mask in 1usize..(1 << ns) {
        let mut cap = 0;
        for (b, &d) in demands.iter().enumerate() {
            if (0..ns).any(|s| mask & (1 << s) != 0 && cm.connected(b, s)) {
                cap += d;
            }
        }
        subset_cap[mask] = cap;
    }

    let mut best: Option<(i64, f64, Vec<i64>)> = None;
    let mut f = vec![0i64; ns];
    loop {
        let feasible = (1usize..(1 << ns)).all(|mask| {
            let shipped: i64 = (0..ns)
                .filter(|&s| mask & (1 << s) != 0)
                .map(|s| f[s])
                .sum();
            shipped <= subset_cap[mask]
        });
        if feasible {
            let local: i64 = f.iter().sum();
            let grid = (total_supply - local) + (total_demand - local);
            let local_cost: f64 = f.iter().zip(&etas).map(|(&q, &e)| q as f64 * e).sum();
            let better = match &best {
                None => true,
                Some((bg, bc, _)) => (grid, local_cost) < (*bg, *bc),
            };
            if better {
                best = Some((grid, local_cost, f.clone()));
            }
        }
        // Odometer increment over 0..=supply per seller.
        let mut done = ns == 0;
        if !done {
            let mut pos = ns - 1;
            loop {
                if f[pos] < supplies[pos] {
                    f[pos] += 1;
                    break;
                }
                f[pos] = 0;
                if pos == 0 {
                    done = true;
                    break;
                }
                pos -= 1;
            }
        }
        if done {
            break;
        }
    }

    let (_, _, f) = best.ok_or_else(|| {
        SolverError::Internal("no feasible totals; zero vector should always pass".into())
    })?;
    let flows = route_totals(&f, &demands, cm)
        .ok_or_else(|| SolverError::Internal("winning totals failed to route".into()))?;

    let mut allocation = AllocationMatrix::zeroed(nb, ns);
    for b in 0..nb {
        for s in 0..ns {
            allocation.entries[b][s] = flows[b][s] as f64;
        }
    }
    for b in 0..nb {
        let received: i64 = (0..ns).map(|s| flows[b][s]).sum();
        allocation.entries[b][ns] = (demands[b] - received) as f64;
    }
    for s in 0..ns {
        allocation.entries[nb][s] = (supplies[s] - f[s]) as f64;
    }
    Ok(allocation)
}
