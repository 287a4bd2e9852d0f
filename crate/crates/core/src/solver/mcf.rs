//! Exact successive-shortest-path min-cost flow over two-level integer costs.
//!
//! The transportation instances this crate solves are tiny (tens of nodes)
//! but must be bit-reproducible and free of pivot-tolerance drift, so all
//! arithmetic is integral: quantities are fixed-point units supplied by the
//! caller and costs are [`LexCost`] pairs compared lexicographically. The
//! primary level carries the scaled efficiency / big-M coefficients; the
//! secondary level carries an arc-index preference so ties among optimal
//! bases resolve toward the lowest seller index, then the lowest buyer
//! index. Successive shortest paths with Johnson potentials remain valid
//! over any ordered group, so the usual Dijkstra machinery applies
//! unchanged to the pairs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::{Add, AddAssign, Sub, SubAssign};

/// Two-level arc cost compared lexicographically (derive order matters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub(crate) struct LexCost {
    pub primary: i128,
    pub secondary: i128,
}

impl LexCost {
    pub const ZERO: LexCost = LexCost {
        primary: 0,
        secondary: 0,
    };

    pub fn new(primary: i128, secondary: i128) -> Self {
        Self { primary, secondary }
    }
}

impl Add for LexCost {
    type Output = LexCost;
    fn add(self, rhs: LexCost) -> LexCost {
        LexCost::new(self.primary + rhs.primary, self.secondary + rhs.secondary)
    }
}

impl AddAssign for LexCost {
    fn add_assign(&mut self, rhs: LexCost) {
        self.primary += rhs.primary;
        self.secondary += rhs.secondary;
    }
}

impl Sub for LexCost {
    type Output = LexCost;
    fn sub(self, rhs: LexCost) -> LexCost {
        LexCost::new(self.primary - rhs.primary, self.secondary - rhs.secondary)
    }
}

impl SubAssign for LexCost {
    fn sub_assign(&mut self, rhs: LexCost) {
        self.primary -= rhs.primary;
        self.secondary -= rhs.secondary;
    }
}

const UNSET: u32 = u32::MAX;

/// Min-cost flow network. Arcs are stored in forward/backward pairs; the
/// forward arc of pair `id` is `2 * id`, its residual twin `2 * id + 1`.
pub(crate) struct MinCostFlow {
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    residual: Vec<i64>,
    cost: Vec<LexCost>,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            residual: Vec::new(),
            cost: Vec::new(),
        }
    }

    /// Adds a forward arc with the given capacity and nonnegative cost.
    /// Returns the pair id used with [`flow_on`](Self::flow_on).
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: LexCost) -> usize {
        debug_assert!(cap >= 0);
        debug_assert!(cost >= LexCost::ZERO);
        let id = self.to.len();
        self.adj[from].push(id as u32);
        self.to.push(to as u32);
        self.residual.push(cap);
        self.cost.push(cost);
        self.adj[to].push((id + 1) as u32);
        self.to.push(from as u32);
        self.residual.push(0);
        self.cost.push(LexCost::ZERO - cost);
        id / 2
    }

    /// Flow currently on forward arc `pair` (the residual of its twin).
    pub fn flow_on(&self, pair: usize) -> i64 {
        self.residual[2 * pair + 1]
    }

    /// Pushes flow from `source` to `sink` until the sink is unreachable in
    /// the residual network. Returns the total flow sent. Deterministic:
    /// heap ties break on node index and arcs relax in insertion order.
    pub fn run(&mut self, source: usize, sink: usize) -> i64 {
        let n = self.adj.len();
        let mut phi = vec![LexCost::ZERO; n];
        let mut dist: Vec<Option<LexCost>> = vec![None; n];
        let mut parent_arc = vec![UNSET; n];
        let mut heap: BinaryHeap<Reverse<(LexCost, u32)>> = BinaryHeap::new();
        let mut total_flow: i64 = 0;

        loop {
            dist.iter_mut().for_each(|d| *d = None);
            parent_arc.iter_mut().for_each(|p| *p = UNSET);
            heap.clear();
            dist[source] = Some(LexCost::ZERO);
            heap.push(Reverse((LexCost::ZERO, source as u32)));

            while let Some(Reverse((du, u))) = heap.pop() {
                let u = u as usize;
                if dist[u] != Some(du) {
                    continue;
                }
                for &arc in &self.adj[u] {
                    let arc = arc as usize;
                    if self.residual[arc] == 0 {
                        continue;
                    }
                    let v = self.to[arc] as usize;
                    let nd = du + self.cost[arc] + phi[u] - phi[v];
                    if dist[v].map_or(true, |dv| nd < dv) {
                        dist[v] = Some(nd);
                        parent_arc[v] = arc as u32;
                        heap.push(Reverse((nd, v as u32)));
                    }
                }
            }

            if dist[sink].is_none() {
                break;
            }

            // Reduced costs stay valid for the reachable set only; nodes
            // outside it can never rejoin the residual network.
            for v in 0..n {
                if let Some(dv) = dist[v] {
                    phi[v] += dv;
                }
            }

            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != source {
                let arc = parent_arc[v] as usize;
                bottleneck = bottleneck.min(self.residual[arc]);
                v = self.to[arc ^ 1] as usize;
            }
            debug_assert!(bottleneck > 0);

            let mut v = sink;
            while v != source {
                let arc = parent_arc[v] as usize;
                self.residual[arc] -= bottleneck;
                self.residual[arc ^ 1] += bottleneck;
                v = self.to[arc ^ 1] as usize;
            }
            total_flow += bottleneck;
        }

        total_flow
    }
}
