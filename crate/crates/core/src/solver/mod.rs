//! Interval clearing: an exact transportation solve over buyer demands and
//! seller supplies with the grid as the always-available slack counterparty.
//!
//! Layout convention used throughout: buyers index rows and sellers index
//! columns, non-grid participants first and the grid last. Row `n_buyers`
//! is the grid acting as buyer (absorbing spill), column `n_sellers` is the
//! grid acting as seller (covering shortfall). Grid arcs carry a big-M
//! penalty so any feasible local exchange is preferred to routing through
//! the grid; among allocations with maximal local exchange the solver
//! minimizes total efficiency-weighted cost, and among those it prefers
//! low seller indices, then low buyer indices, so results are canonical.
//!
//! Quantities are snapped to a binary fixed-point grid of 2^-36 kWh and
//! costs to 2^-40 before solving, which keeps the network integral (exact,
//! reproducible pivots) while staying far below the 1e-9 conservation
//! tolerance the mechanism layer checks against.

mod mcf;
mod oracle;

pub use oracle::brute_force_allocation;

use mcf::{LexCost, MinCostFlow};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary fixed-point scale for energy quantities (2^36 units per kWh).
const QTY_SCALE: f64 = (1u64 << 36) as f64;
/// Binary fixed-point scale for cost coefficients (2^40 units per kWh-cost).
const COST_SCALE: f64 = (1u64 << 40) as f64;
/// Largest kWh magnitude we allow before fixed-point conversion could
/// lose row-sum exactness or overflow the flow capacities.
const MAX_QUANTITY_KWH: f64 = 1.0e12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{side} quantity at index {index} must be finite and positive, got {value}")]
    InvalidQuantity {
        side: &'static str,
        index: usize,
        value: f64,
    },
    #[error("quantity {0} kWh exceeds the solver's fixed-point range")]
    QuantityOutOfRange(f64),
    #[error("seller efficiency at index {index} must lie in (0, 1], got {value}")]
    InvalidEfficiency { index: usize, value: f64 },
    #[error("big-M {big_m} does not dominate local costs; needs to exceed {required}")]
    BigMTooSmall { big_m: f64, required: f64 },
    #[error("oracle refused the instance: {0}")]
    OracleRefused(String),
    #[error("internal flow imbalance: {0}")]
    Internal(String),
}

/// Which seller-buyer arcs exist. Sized over non-grid participants only;
/// arcs touching the grid are connected by construction, which encodes the
/// invariant that the grid is always reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMatrix {
    n_buyers: usize,
    n_sellers: usize,
    local: Vec<bool>,
}

impl ConnectivityMatrix {
    /// All-ones connectivity over `n_buyers` x `n_sellers` non-grid arcs.
    pub fn fully_connected(n_buyers: usize, n_sellers: usize) -> Self {
        Self {
            n_buyers,
            n_sellers,
            local: vec![true; n_buyers * n_sellers],
        }
    }

    /// Connectivity from an explicit non-grid adjacency, row-major by buyer.
    pub fn from_local(rows: &[Vec<bool>]) -> Result<Self, SolverError> {
        let n_buyers = rows.len();
        let n_sellers = rows.first().map_or(0, Vec::len);
        let mut local = Vec::with_capacity(n_buyers * n_sellers);
        for (b, row) in rows.iter().enumerate() {
            if row.len() != n_sellers {
                return Err(SolverError::DimensionMismatch(format!(
                    "connectivity row {b} has {} entries, expected {n_sellers}",
                    row.len()
                )));
            }
            local.extend_from_slice(row);
        }
        Ok(Self {
            n_buyers,
            n_sellers,
            local,
        })
    }

    pub fn n_buyers(&self) -> usize {
        self.n_buyers
    }

    pub fn n_sellers(&self) -> usize {
        self.n_sellers
    }

    /// True when buyer `b` can receive from seller `s`. Indices equal to
    /// the non-grid count address the grid side, which is always connected.
    pub fn connected(&self, buyer: usize, seller: usize) -> bool {
        if buyer >= self.n_buyers || seller >= self.n_sellers {
            return true;
        }
        self.local[buyer * self.n_sellers + seller]
    }
}

/// Per-arc cost coefficients including the grid penalty rows.
/// `entries[b][s]` is the cost of shipping one kWh from seller `s` to
/// buyer `b`; the trailing row/column is the grid at `big_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub entries: Vec<Vec<f64>>,
    pub big_m: f64,
}

impl CostMatrix {
    /// Buyer rows including the grid row.
    pub fn n_rows(&self) -> usize {
        self.entries.len()
    }

    /// Seller columns including the grid column.
    pub fn n_cols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }
}

/// Builds the interval cost matrix: every non-grid arc from seller `s`
/// costs that seller's loss coefficient (grid-delivery efficiency), and
/// every arc touching the grid costs `big_m`.
pub fn build_cost_matrix(
    seller_etas: &[f64],
    n_buyers: usize,
    cm: &ConnectivityMatrix,
    big_m: f64,
) -> Result<CostMatrix, SolverError> {
    if cm.n_buyers() != n_buyers || cm.n_sellers() != seller_etas.len() {
        return Err(SolverError::DimensionMismatch(format!(
            "connectivity is {}x{}, offers are {}x{}",
            cm.n_buyers(),
            cm.n_sellers(),
            n_buyers,
            seller_etas.len()
        )));
    }
    for (index, &eta) in seller_etas.iter().enumerate() {
        if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
            return Err(SolverError::InvalidEfficiency { index, value: eta });
        }
    }
    if !big_m.is_finite() || big_m <= 1.0 {
        return Err(SolverError::BigMTooSmall {
            big_m,
            required: 1.0,
        });
    }
    let n_sellers = seller_etas.len();
    let mut entries = Vec::with_capacity(n_buyers + 1);
    for _ in 0..n_buyers {
        let mut row: Vec<f64> = seller_etas.to_vec();
        row.push(big_m);
        entries.push(row);
    }
    entries.push(vec![big_m; n_sellers + 1]);
    Ok(CostMatrix { entries, big_m })
}

/// A cleared interval: kWh shipped on every seller-buyer arc, grid last.
/// The grid-to-grid cell is always zero (the grid does not trade with
/// itself; the balancing flow it would carry is bookkeeping, not energy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationMatrix {
    pub entries: Vec<Vec<f64>>,
    pub n_buyers: usize,
    pub n_sellers: usize,
}

impl AllocationMatrix {
    fn zeroed(n_buyers: usize, n_sellers: usize) -> Self {
        Self {
            entries: vec![vec![0.0; n_sellers + 1]; n_buyers + 1],
            n_buyers,
            n_sellers,
        }
    }

    /// kWh buyer `b` receives from non-grid sellers.
    pub fn local_receipts(&self, buyer: usize) -> f64 {
        self.entries[buyer][..self.n_sellers].iter().sum()
    }

    /// kWh seller `s` delivers to non-grid buyers.
    pub fn local_deliveries(&self, seller: usize) -> f64 {
        self.entries[..self.n_buyers]
            .iter()
            .map(|row| row[seller])
            .sum()
    }

    /// kWh buyer `b` draws over its grid arc.
    pub fn grid_import(&self, buyer: usize) -> f64 {
        self.entries[buyer][self.n_sellers]
    }

    /// kWh seller `s` sends over its grid arc.
    pub fn grid_spill(&self, seller: usize) -> f64 {
        self.entries[self.n_buyers][seller]
    }

    /// Total kWh crossing any grid arc.
    pub fn total_grid_flow(&self) -> f64 {
        let imports: f64 = (0..self.n_buyers).map(|b| self.grid_import(b)).sum();
        let spills: f64 = (0..self.n_sellers).map(|s| self.grid_spill(s)).sum();
        imports + spills
    }

    /// Total kWh exchanged locally (off-grid).
    pub fn total_local_exchange(&self) -> f64 {
        (0..self.n_sellers).map(|s| self.local_deliveries(s)).sum()
    }

    /// Objective value of this allocation under `costs`. The zero
    /// grid-to-grid cell contributes nothing, so the reported value is
    /// `sum eta_s * local_s + big_m * total_grid_flow`.
    pub fn objective(&self, costs: &CostMatrix) -> f64 {
        let mut total = 0.0;
        for (row, cost_row) in self.entries.iter().zip(&costs.entries) {
            for (&q, &c) in row.iter().zip(cost_row) {
                total += q * c;
            }
        }
        total
    }

    /// Largest absolute deviation between non-grid row sums and `demands`,
    /// and non-grid column sums and `supplies`.
    pub fn max_balance_error(&self, demands: &[f64], supplies: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (b, &d) in demands.iter().enumerate() {
            let row: f64 = self.entries[b].iter().sum();
            worst = worst.max((row - d).abs());
        }
        for (s, &e) in supplies.iter().enumerate() {
            let col: f64 = self.entries.iter().map(|row| row[s]).sum();
            worst = worst.max((col - e).abs());
        }
        worst
    }
}

/// Pairs of seller indices `(cheap, dear)` where the dearer seller ships
/// locally while the cheaper one spills to the grid — a preference
/// inversion that an optimal allocation over full connectivity never
/// exhibits. Intended as a post-check; returns the offending pairs.
pub fn preference_inversions(
    allocation: &AllocationMatrix,
    seller_etas: &[f64],
    tol: f64,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for cheap in 0..seller_etas.len() {
        for dear in 0..seller_etas.len() {
            if seller_etas[cheap] + tol < seller_etas[dear]
                && allocation.grid_spill(cheap) > tol
                && allocation.local_deliveries(dear) > tol
            {
                out.push((cheap, dear));
            }
        }
    }
    out
}

fn to_units(kwh: f64) -> i64 {
    (kwh * QTY_SCALE).round() as i64
}

fn from_units(units: i64) -> f64 {
    units as f64 / QTY_SCALE
}

fn validate_side(side: &'static str, values: &[f64]) -> Result<(), SolverError> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() || value <= 0.0 {
            return Err(SolverError::InvalidQuantity { side, index, value });
        }
        if value > MAX_QUANTITY_KWH {
            return Err(SolverError::QuantityOutOfRange(value));
        }
    }
    Ok(())
}

/// Clears one interval exactly. `buyer_demands` and `seller_supplies`
/// hold the positive non-grid quantities; `costs` and `cm` describe the
/// arcs as produced by [`build_cost_matrix`]. The grid absorbs whichever
/// side is long, so every instance is feasible.
///
/// Errors if dimensions disagree, quantities are nonpositive or
/// non-finite, or `big_m` is too small to dominate every possible local
/// cost swing (which would let grid flow leak into the optimum).
pub fn solve_allocation(
    buyer_demands: &[f64],
    seller_supplies: &[f64],
    costs: &CostMatrix,
    cm: &ConnectivityMatrix,
) -> Result<AllocationMatrix, SolverError> {
    let n_buyers = buyer_demands.len();
    let n_sellers = seller_supplies.len();
    if costs.n_rows() != n_buyers + 1 || costs.n_cols() != n_sellers + 1 {
        return Err(SolverError::DimensionMismatch(format!(
            "cost matrix is {}x{}, expected {}x{}",
            costs.n_rows(),
            costs.n_cols(),
            n_buyers + 1,
            n_sellers + 1
        )));
    }
    if cm.n_buyers() != n_buyers || cm.n_sellers() != n_sellers {
        return Err(SolverError::DimensionMismatch(format!(
            "connectivity is {}x{}, offers are {n_buyers}x{n_sellers}",
            cm.n_buyers(),
            cm.n_sellers()
        )));
    }
    validate_side("buyer", buyer_demands)?;
    validate_side("seller", seller_supplies)?;

    // Dominance: raising local exchange by one flow quantum perturbs the
    // conditional-optimal local cost by at most (cycle length) * eta_max
    // per quantum, and the coarse participants * total-energy bound covers
    // instances where rounding makes totals small. Either way big_m must
    // exceed the bound strictly or lexicographic behaviour is lost.
    let total_energy: f64 = buyer_demands.iter().sum::<f64>() + seller_supplies.iter().sum::<f64>();
    let participants = (n_buyers + n_sellers + 2) as f64;
    let required = participants * total_energy + participants * participants;
    if costs.big_m <= required {
        return Err(SolverError::BigMTooSmall {
            big_m: costs.big_m,
            required,
        });
    }

    if n_buyers == 0 && n_sellers == 0 {
        return Ok(AllocationMatrix::zeroed(0, 0));
    }

    let demand_units: Vec<i64> = buyer_demands.iter().map(|&d| to_units(d)).collect();
    let supply_units: Vec<i64> = seller_supplies.iter().map(|&s| to_units(s)).collect();
    let grid_supply: i64 = demand_units.iter().sum();
    let grid_demand: i64 = supply_units.iter().sum();

    // Node ids: source, sellers (grid seller last), buyers (grid buyer
    // last), sink.
    let source = 0;
    let seller_node = |s: usize| 1 + s;
    let buyer_node = |b: usize| 1 + (n_sellers + 1) + b;
    let sink = 2 + n_sellers + n_buyers + 1;
    let mut net = MinCostFlow::new(sink + 1);

    for (s, &cap) in supply_units.iter().enumerate() {
        net.add_arc(source, seller_node(s), cap, LexCost::ZERO);
    }
    net.add_arc(source, seller_node(n_sellers), grid_supply, LexCost::ZERO);

    let arc_cap = grid_supply + grid_demand;
    let mut arc_ids = vec![vec![usize::MAX; n_sellers + 1]; n_buyers + 1];
    for s in 0..=n_sellers {
        for b in 0..=n_buyers {
            if !cm.connected(b, s) {
                continue;
            }
            let primary = (costs.entries[b][s] * COST_SCALE).round() as i128;
            let secondary = (s * (n_buyers + 2) + b + 1) as i128;
            arc_ids[b][s] = net.add_arc(
                seller_node(s),
                buyer_node(b),
                arc_cap,
                LexCost::new(primary, secondary),
            );
        }
    }

    for (b, &cap) in demand_units.iter().enumerate() {
        net.add_arc(buyer_node(b), sink, cap, LexCost::ZERO);
    }
    net.add_arc(buyer_node(n_buyers), sink, grid_demand, LexCost::ZERO);

    let sent = net.run(source, sink);
    let expected = grid_supply + grid_demand;
    if sent != expected {
        return Err(SolverError::Internal(format!(
            "pushed {sent} of {expected} flow units"
        )));
    }

    let mut allocation = AllocationMatrix::zeroed(n_buyers, n_sellers);
    for b in 0..=n_buyers {
        for s in 0..=n_sellers {
            if arc_ids[b][s] == usize::MAX {
                continue;
            }
            allocation.entries[b][s] = from_units(net.flow_on(arc_ids[b][s]));
        }
    }
    // The grid-grid cell carried the balancing slack; it is not a trade.
    allocation.entries[n_buyers][n_sellers] = 0.0;

    for (b, &units) in demand_units.iter().enumerate() {
        let row: i64 = allocation.entries[b].iter().map(|&q| to_units(q)).sum();
        if row != units {
            return Err(SolverError::Internal(format!(
                "buyer {b} row sums to {row} units, expected {units}"
            )));
        }
    }
    for (s, &units) in supply_units.iter().enumerate() {
        let col: i64 = allocation.entries.iter().map(|row| to_units(row[s])).sum();
        if col != units {
            return Err(SolverError::Internal(format!(
                "seller {s} column sums to {col} units, expected {units}"
            )));
        }
    }
    Ok(allocation)
}
