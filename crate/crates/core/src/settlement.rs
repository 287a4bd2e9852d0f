//! Settlement over a full operation cycle: per-agent storage losses,
//! difference-evaluation rewards, the lowest price split that keeps the
//! exchange individually rational, and welfare/fairness metrics.
//!
//! All loss figures are kWh of round-trip energy destroyed by storage;
//! utilities are money. Conventions follow the trace: exchange is
//! positive when received, battery power positive when charging.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::Scenario;
use crate::mechanism::{
    run_counterfactual_without, run_simulation, Mechanism, MechanismError, SimulationTrace,
};

/// Conservation identities (Σw = 1, Σ(L) = system loss) must hold to
/// this tolerance or settlement aborts.
const IDENTITY_TOL: f64 = 1e-9;
/// Coefficients smaller than this are treated as zero in the rationality
/// search, so rounding noise cannot produce absurd bounds.
const ALPHA_COEFF_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SettlementError {
    #[error("settlement requires at least 2 prosumers, got {0}")]
    TooFewProsumers(usize),
    #[error("reward precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Round-trip energy destroyed by one agent's battery over the cycle:
/// net energy drawn into storage plus the offset that would restore the
/// initial state of charge.
pub fn agent_loss(trace: &SimulationTrace, agent: usize) -> f64 {
    trace.battery_sum(agent) + trace.theta(agent)
}

/// Total storage loss across all agents in the trace.
pub fn system_loss(trace: &SimulationTrace) -> f64 {
    (0..trace.n_agents()).map(|a| agent_loss(trace, a)).sum()
}

/// Difference evaluation of one agent: system loss with everyone minus
/// system loss when this agent sits out.
pub fn marginal_loss(
    scenario: &Scenario,
    mechanism: Mechanism,
    excluded: usize,
) -> Result<f64, SettlementError> {
    let include = vec![true; scenario.n_prosumers()];
    let full = run_simulation(scenario, mechanism, &include)?;
    let without = run_counterfactual_without(scenario, mechanism, excluded)?;
    Ok(system_loss(&full) - system_loss(&without))
}

/// Softmax with max-subtraction: stable for arbitrarily large marginals,
/// invariant under a common shift, and summing to one.
pub fn softmax_weights(marginals: &[f64]) -> Vec<f64> {
    if marginals.is_empty() {
        return Vec::new();
    }
    let max = marginals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = marginals.iter().map(|&m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Zero-sum reward transfer: each agent's own loss minus its weighted
/// share of the system loss. Aborts if the weights do not sum to one or
/// the system loss disagrees with the per-agent losses.
pub fn component_rewards(
    losses: &[f64],
    weights: &[f64],
    system: f64,
) -> Result<Vec<f64>, SettlementError> {
    if losses.len() != weights.len() {
        return Err(SettlementError::Precondition(format!(
            "{} losses vs {} weights",
            losses.len(),
            weights.len()
        )));
    }
    let weight_sum: f64 = weights.iter().sum();
    if (weight_sum - 1.0).abs() > IDENTITY_TOL {
        return Err(SettlementError::Precondition(format!(
            "weights sum to {weight_sum}, expected 1"
        )));
    }
    let loss_sum: f64 = losses.iter().sum();
    if (loss_sum - system).abs() > IDENTITY_TOL {
        return Err(SettlementError::Precondition(format!(
            "per-agent losses sum to {loss_sum}, system loss is {system}"
        )));
    }
    Ok(losses
        .iter()
        .zip(weights)
        .map(|(l, w)| l - w * system)
        .collect())
}

/// Money outcome for one agent: grid purchases at full price, local
/// exchange at the α fraction (signed, so sellers are paid), and the
/// reward transfer at the complementary fraction. Under the two
/// baseline mechanisms only the grid component exists.
pub fn utility(
    trace: &SimulationTrace,
    agent: usize,
    reward_kwh: f64,
    alpha: f64,
    price: f64,
) -> f64 {
    let grid = trace.grid_import_sum(agent);
    match trace.mechanism {
        Mechanism::Exchange => {
            let exchange = trace.exchange_sum(agent);
            -price * (grid + alpha * exchange - (1.0 - alpha) * reward_kwh)
        }
        Mechanism::NoFlexibility | Mechanism::Individual => -price * grid,
    }
}

/// Lowest α in [0, 1) at which every agent weakly prefers the exchange
/// outcome to both baselines. Each agent/baseline pair contributes one
/// linear constraint α·(X_i + R_i) ≤ (G_i^k − G_i^2) + R_i; the
/// constraints carve a sub-interval of [0, 1) whose infimum is returned.
/// When the intersection is empty the fallback α is reported with
/// `feasible = false`.
pub fn find_alpha(
    no_flex: &SimulationTrace,
    individual: &SimulationTrace,
    exchange: &SimulationTrace,
    rewards: &[f64],
    alpha_fallback: f64,
) -> (f64, bool) {
    let n = exchange.n_agents();
    debug_assert!(no_flex.n_agents() == n && individual.n_agents() == n && rewards.len() == n);
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    let mut empty = false;
    for i in 0..n {
        let a = exchange.exchange_sum(i) + rewards[i];
        let grid_2 = exchange.grid_import_sum(i);
        for baseline in [no_flex, individual] {
            let b = (baseline.grid_import_sum(i) - grid_2) + rewards[i];
            if a > ALPHA_COEFF_TOL {
                hi = hi.min(b / a);
            } else if a < -ALPHA_COEFF_TOL {
                lo = lo.max(b / a);
            } else if b < -ALPHA_COEFF_TOL {
                empty = true;
            }
        }
    }
    if !empty && lo <= hi && lo < 1.0 {
        (lo, true)
    } else {
        (alpha_fallback, false)
    }
}

/// Utilitarian welfare: the sum of utilities.
pub fn social_welfare(utilities: &[f64]) -> f64 {
    utilities.iter().sum()
}

/// Log Nash criterion of mechanism `m` relative to baseline `k`:
/// Σ log(u_i(m) − u_i(k)), defined only when every agent strictly
/// improves (otherwise the product carries no fairness meaning).
pub fn nash_fairness(utilities_m: &[f64], utilities_k: &[f64]) -> Option<f64> {
    debug_assert_eq!(utilities_m.len(), utilities_k.len());
    let mut log_product = 0.0;
    for (um, uk) in utilities_m.iter().zip(utilities_k) {
        let delta = um - uk;
        if delta <= 0.0 {
            return None;
        }
        log_product += delta.ln();
    }
    Some(log_product)
}

/// One agent's settlement line. Losses, marginals, weights, and rewards
/// refer to the exchange mechanism; utilities are reported under all
/// three mechanisms at the common α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSettlement {
    pub prosumer: usize,
    pub loss_kwh: f64,
    pub marginal_loss_kwh: f64,
    pub weight: f64,
    pub reward_kwh: f64,
    pub utility_m0: f64,
    pub utility_m1: f64,
    pub utility_m2: f64,
}

/// Full settlement of one scenario: per-agent lines plus cycle-level
/// losses, welfare, the price split, and fairness scores (absent when
/// some agent fails to improve strictly).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlementReport {
    pub price: f64,
    pub alpha: f64,
    pub alpha_feasible: bool,
    pub system_loss_m0: f64,
    pub system_loss_m1: f64,
    pub system_loss_m2: f64,
    pub sw_m0: f64,
    pub sw_m1: f64,
    pub sw_m2: f64,
    pub log_nash_2_0: Option<f64>,
    pub log_nash_1_0: Option<f64>,
    pub agents: Vec<AgentSettlement>,
}

impl SettlementReport {
    pub fn system_loss(&self, mechanism: Mechanism) -> f64 {
        match mechanism {
            Mechanism::NoFlexibility => self.system_loss_m0,
            Mechanism::Individual => self.system_loss_m1,
            Mechanism::Exchange => self.system_loss_m2,
        }
    }

    pub fn social_welfare(&self, mechanism: Mechanism) -> f64 {
        match mechanism {
            Mechanism::NoFlexibility => self.sw_m0,
            Mechanism::Individual => self.sw_m1,
            Mechanism::Exchange => self.sw_m2,
        }
    }

    /// Writes agent rows followed by `#`-prefixed cycle-level lines;
    /// undefined fairness scores are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "prosumer,loss_kwh,marginal_loss_kwh,weight,reward_kwh,utility_m0,utility_m1,utility_m2"
        )?;
        for a in &self.agents {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                a.prosumer,
                a.loss_kwh,
                a.marginal_loss_kwh,
                a.weight,
                a.reward_kwh,
                a.utility_m0,
                a.utility_m1,
                a.utility_m2
            )?;
        }
        let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        writeln!(out, "# price,{}", self.price)?;
        writeln!(out, "# alpha,{}", self.alpha)?;
        writeln!(out, "# alpha_feasible,{}", self.alpha_feasible)?;
        writeln!(out, "# system_loss_m0,{}", self.system_loss_m0)?;
        writeln!(out, "# system_loss_m1,{}", self.system_loss_m1)?;
        writeln!(out, "# system_loss_m2,{}", self.system_loss_m2)?;
        writeln!(out, "# sw_m0,{}", self.sw_m0)?;
        writeln!(out, "# sw_m1,{}", self.sw_m1)?;
        writeln!(out, "# sw_m2,{}", self.sw_m2)?;
        writeln!(out, "# log_f_2_0,{}", na(self.log_nash_2_0))?;
        writeln!(out, "# log_f_1_0,{}", na(self.log_nash_1_0))?;
        Ok(())
    }
}

/// Runs all three mechanisms plus the per-agent exchange counterfactuals
/// and assembles the full settlement. Counterfactual runs execute in
/// parallel; results are deterministic regardless of thread order.
pub fn settle_scenario(scenario: &Scenario) -> Result<SettlementReport, SettlementError> {
    let n = scenario.n_prosumers();
    if n < 2 {
        return Err(SettlementError::TooFewProsumers(n));
    }
    let include = vec![true; n];
    let trace_0 = run_simulation(scenario, Mechanism::NoFlexibility, &include)?;
    let trace_1 = run_simulation(scenario, Mechanism::Individual, &include)?;
    let trace_2 = run_simulation(scenario, Mechanism::Exchange, &include)?;

    let losses: Vec<f64> = (0..n).map(|i| agent_loss(&trace_2, i)).collect();
    let system: f64 = losses.iter().sum();
    let reduced: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            run_counterfactual_without(scenario, Mechanism::Exchange, i).map(|t| system_loss(&t))
        })
        .collect::<Result<_, _>>()?;
    let marginals: Vec<f64> = reduced.iter().map(|without| system - without).collect();
    let weights = softmax_weights(&marginals);
    let rewards = component_rewards(&losses, &weights, system)?;

    let (alpha, alpha_feasible) = find_alpha(
        &trace_0,
        &trace_1,
        &trace_2,
        &rewards,
        scenario.config.alpha_default,
    );
    let price = scenario.config.price;
    let u = |trace: &SimulationTrace| -> Vec<f64> {
        (0..n)
            .map(|i| utility(trace, i, rewards[i], alpha, price))
            .collect()
    };
    let utilities_0 = u(&trace_0);
    let utilities_1 = u(&trace_1);
    let utilities_2 = u(&trace_2);

    let agents = (0..n)
        .map(|i| AgentSettlement {
            prosumer: i,
            loss_kwh: losses[i],
            marginal_loss_kwh: marginals[i],
            weight: weights[i],
            reward_kwh: rewards[i],
            utility_m0: utilities_0[i],
            utility_m1: utilities_1[i],
            utility_m2: utilities_2[i],
        })
        .collect();
    Ok(SettlementReport {
        price,
        alpha,
        alpha_feasible,
        system_loss_m0: system_loss(&trace_0),
        system_loss_m1: system_loss(&trace_1),
        system_loss_m2: system,
        sw_m0: social_welfare(&utilities_0),
        sw_m1: social_welfare(&utilities_1),
        sw_m2: social_welfare(&utilities_2),
        log_nash_2_0: nash_fairness(&utilities_2, &utilities_0),
        log_nash_1_0: nash_fairness(&utilities_1, &utilities_0),
        agents,
    })
}
