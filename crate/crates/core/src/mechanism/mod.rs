//! Operation-cycle simulation under the three mechanisms: no flexibility,
//! individual battery control, and the local exchange with battery
//! control on post-exchange residuals.
//!
//! Under the exchange mechanism each interval proceeds offer -> clear ->
//! dispatch: prosumers with nonzero raw net position submit offers (the
//! battery is not offered to the market), the interval clears as a
//! transportation solve, buyers receive their local allocations, and
//! every prosumer then runs its battery against what the exchange did not
//! place: buyers discharge toward their grid-arc shortfall, sellers
//! charge from their unplaced surplus and spill the remainder.

mod battery;
mod trace;

pub use battery::{
    battery_policy_greedy, soc_restoration_offset, BatteryConfigError, BatterySpec, BatteryState,
};
pub use trace::{SimulationTrace, StepRecord};

use chrono::Duration;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::Scenario;
use crate::market::{make_offer, net_position, MarketError, MarketOffer};
use crate::solver::{build_cost_matrix, solve_allocation, ConnectivityMatrix, SolverError};

/// Coordination mechanism, tagged 0/1/2 in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// All net demand is resolved against the grid.
    NoFlexibility,
    /// Each prosumer runs its own battery; no exchange.
    Individual,
    /// Local exchange clearing plus battery control of residuals.
    Exchange,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [
        Mechanism::NoFlexibility,
        Mechanism::Individual,
        Mechanism::Exchange,
    ];

    pub fn index(self) -> u8 {
        match self {
            Mechanism::NoFlexibility => 0,
            Mechanism::Individual => 1,
            Mechanism::Exchange => 2,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            0 => Some(Mechanism::NoFlexibility),
            1 => Some(Mechanism::Individual),
            2 => Some(Mechanism::Exchange),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<u8>()
            .ok()
            .and_then(Mechanism::from_index)
            .ok_or_else(|| format!("mechanism must be 0, 1 or 2, got {s:?}"))
    }
}

impl Serialize for Mechanism {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.index())
    }
}

impl<'de> Deserialize<'de> for Mechanism {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let index = u8::deserialize(deserializer)?;
        Mechanism::from_index(index)
            .ok_or_else(|| D::Error::custom(format!("mechanism must be 0, 1 or 2, got {index}")))
    }
}

/// One prosumer's inputs over the operation cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerProfile {
    pub demand_kwh: Vec<f64>,
    pub pv_kwh: Vec<f64>,
    pub battery: BatterySpec,
}

impl ProsumerProfile {
    pub fn validate(&self, expected_steps: usize) -> Result<(), ProfileError> {
        if self.demand_kwh.len() != expected_steps || self.pv_kwh.len() != expected_steps {
            return Err(ProfileError::Length {
                demand: self.demand_kwh.len(),
                pv: self.pv_kwh.len(),
                expected: expected_steps,
            });
        }
        for (t, &v) in self.demand_kwh.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(ProfileError::BadValue {
                    series: "demand",
                    t,
                    value: v,
                });
            }
        }
        for (t, &v) in self.pv_kwh.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(ProfileError::BadValue {
                    series: "pv",
                    t,
                    value: v,
                });
            }
        }
        self.battery.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("series lengths demand={demand} pv={pv} do not match the horizon {expected}")]
    Length {
        demand: usize,
        pv: usize,
        expected: usize,
    },
    #[error("{series} series has invalid value {value} at step {t}")]
    BadValue {
        series: &'static str,
        t: usize,
        value: f64,
    },
    #[error(transparent)]
    Battery(#[from] BatteryConfigError),
}

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("include mask covers {got} prosumers, scenario has {expected}")]
    IncludeMaskLength { got: usize, expected: usize },
    #[error("no prosumers included in the run")]
    EmptySubset,
    #[error("prosumer index {index} out of range for {n} prosumers")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("counterfactual runs need at least 2 prosumers, scenario has {0}")]
    TooFewProsumers(usize),
    #[error("profile {index}: {source}")]
    Profile { index: usize, source: ProfileError },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One cleared interval captured for diagnostics (`--dump-lp`): the offer
/// sides, the cost structure, and the solved allocation.
#[derive(Debug, Clone, Serialize)]
pub struct LpDump {
    pub t: usize,
    pub buyer_prosumers: Vec<usize>,
    pub seller_prosumers: Vec<usize>,
    pub demands_kwh: Vec<f64>,
    pub supplies_kwh: Vec<f64>,
    pub seller_etas: Vec<f64>,
    pub big_m: f64,
    pub allocation: Vec<Vec<f64>>,
    pub objective: f64,
}

/// No-flexibility step: the raw net position goes straight to the grid.
pub fn step_no_flexibility(demand_kwh: f64, pv_kwh: f64, soc_kwh: f64) -> StepRecord {
    StepRecord::from_parts(demand_kwh, pv_kwh, 0.0, 0.0, soc_kwh)
}

/// Individual-control step: the battery works the raw net position and
/// the remainder goes to the grid.
pub fn step_individual(
    demand_kwh: f64,
    pv_kwh: f64,
    state: &BatteryState,
    spec: &BatterySpec,
    dt_hours: f64,
) -> (StepRecord, BatteryState) {
    step_with_battery(
        demand_kwh,
        pv_kwh,
        0.0,
        net_position(demand_kwh, pv_kwh),
        state,
        spec,
        dt_hours,
    )
}

/// Shared tail of the battery-bearing steps: dispatch against `residual`,
/// then assemble the record with the given exchange receipt.
fn step_with_battery(
    demand_kwh: f64,
    pv_kwh: f64,
    exchange_kwh: f64,
    residual_kwh: f64,
    state: &BatteryState,
    spec: &BatterySpec,
    dt_hours: f64,
) -> (StepRecord, BatteryState) {
    let (pb, next) = battery_policy_greedy(state, residual_kwh, spec, dt_hours);
    let record = StepRecord::from_parts(demand_kwh, pv_kwh, exchange_kwh, pb, next.soc_kwh);
    (record, next)
}

/// Runs one simulation over the whole horizon for the prosumers selected
/// by `include`. Deterministic; battery state threads through time while
/// intervals are otherwise independent.
pub fn run_simulation(
    scenario: &Scenario,
    mechanism: Mechanism,
    include: &[bool],
) -> Result<SimulationTrace, MechanismError> {
    run_simulation_with_dumps(scenario, mechanism, include, false).map(|(trace, _)| trace)
}

/// Like [`run_simulation`], additionally returning the per-interval
/// clearing instances when `collect_dumps` is set (exchange mechanism
/// only; other mechanisms never clear).
pub fn run_simulation_with_dumps(
    scenario: &Scenario,
    mechanism: Mechanism,
    include: &[bool],
    collect_dumps: bool,
) -> Result<(SimulationTrace, Vec<LpDump>), MechanismError> {
    let n = scenario.n_prosumers();
    if include.len() != n {
        return Err(MechanismError::IncludeMaskLength {
            got: include.len(),
            expected: n,
        });
    }
    let ids: Vec<usize> = (0..n).filter(|&i| include[i]).collect();
    if ids.is_empty() {
        return Err(MechanismError::EmptySubset);
    }
    let steps = scenario.n_steps();
    for &i in &ids {
        scenario.profiles[i]
            .validate(steps)
            .map_err(|source| MechanismError::Profile { index: i, source })?;
    }

    let dt = scenario.config.dt_hours;
    let big_m = scenario.config.big_m;
    let specs: Vec<BatterySpec> = ids.iter().map(|&i| scenario.profiles[i].battery).collect();
    let initial: Vec<BatteryState> = specs.iter().map(BatteryState::initial).collect();
    let mut states = initial.clone();
    let mut records: Vec<Vec<StepRecord>> = ids.iter().map(|_| Vec::with_capacity(steps)).collect();
    let mut dumps = Vec::new();

    for t in 0..steps {
        match mechanism {
            Mechanism::NoFlexibility => {
                for (a, &i) in ids.iter().enumerate() {
                    let p = &scenario.profiles[i];
                    records[a].push(step_no_flexibility(
                        p.demand_kwh[t],
                        p.pv_kwh[t],
                        states[a].soc_kwh,
                    ));
                }
            }
            Mechanism::Individual => {
                for (a, &i) in ids.iter().enumerate() {
                    let p = &scenario.profiles[i];
                    let (record, next) =
                        step_individual(p.demand_kwh[t], p.pv_kwh[t], &states[a], &specs[a], dt);
                    records[a].push(record);
                    states[a] = next;
                }
            }
            Mechanism::Exchange => {
                let dump = step_exchange(
                    scenario,
                    &ids,
                    t,
                    &specs,
                    &mut states,
                    &mut records,
                    big_m,
                    collect_dumps,
                )?;
                if let Some(d) = dump {
                    dumps.push(d);
                }
            }
        }
    }

    let theta_kwh: Vec<f64> = ids
        .iter()
        .enumerate()
        .map(|(a, _)| soc_restoration_offset(&initial[a], &states[a], &specs[a]))
        .collect();

    Ok((
        SimulationTrace {
            mechanism,
            dt_hours: dt,
            start: scenario.start,
            prosumer_ids: ids,
            records,
            theta_kwh,
        },
        dumps,
    ))
}

/// One exchange-mechanism interval: offers, clearing, residual dispatch.
#[allow(clippy::too_many_arguments)]
fn step_exchange(
    scenario: &Scenario,
    ids: &[usize],
    t: usize,
    specs: &[BatterySpec],
    states: &mut [BatteryState],
    records: &mut [Vec<StepRecord>],
    big_m: f64,
    collect_dump: bool,
) -> Result<Option<LpDump>, MechanismError> {
    let dt = scenario.config.dt_hours;
    let interval_start =
        scenario.start + Duration::seconds((t as f64 * dt * 3600.0).round() as i64);

    // Offer assembly: raw net positions only; batteries stay local.
    let mut offers: Vec<Option<MarketOffer>> = Vec::with_capacity(ids.len());
    for (a, &i) in ids.iter().enumerate() {
        let p = &scenario.profiles[i];
        let net = net_position(p.demand_kwh[t], p.pv_kwh[t]);
        let offer = if net == 0.0 {
            None
        } else {
            Some(make_offer(
                net,
                specs[a].round_trip_eta,
                interval_start,
                dt,
            )?)
        };
        offers.push(offer);
    }

    let buyers: Vec<usize> = offers
        .iter()
        .enumerate()
        .filter(|(_, o)| o.as_ref().is_some_and(|o| o.is_bid()))
        .map(|(a, _)| a)
        .collect();
    let sellers: Vec<usize> = offers
        .iter()
        .enumerate()
        .filter(|(_, o)| o.as_ref().is_some_and(|o| !o.is_bid()))
        .map(|(a, _)| a)
        .collect();

    // Exchange receipt and post-exchange residual per included prosumer.
    let mut exchange = vec![0.0; ids.len()];
    let mut residual: Vec<f64> = ids
        .iter()
        .map(|&i| {
            let p = &scenario.profiles[i];
            net_position(p.demand_kwh[t], p.pv_kwh[t])
        })
        .collect();

    let mut dump = None;
    if !buyers.is_empty() && !sellers.is_empty() {
        let demands: Vec<f64> = buyers
            .iter()
            .map(|&a| offers[a].as_ref().unwrap().quantity())
            .collect();
        let supplies: Vec<f64> = sellers
            .iter()
            .map(|&a| offers[a].as_ref().unwrap().quantity())
            .collect();
        let etas: Vec<f64> = sellers.iter().map(|&a| specs[a].round_trip_eta).collect();
        let cm = ConnectivityMatrix::fully_connected(buyers.len(), sellers.len());
        let costs = build_cost_matrix(&etas, buyers.len(), &cm, big_m)?;
        let allocation = solve_allocation(&demands, &supplies, &costs, &cm)?;

        for (bi, &a) in buyers.iter().enumerate() {
            exchange[a] = allocation.local_receipts(bi);
            residual[a] = allocation.grid_import(bi);
        }
        for (si, &a) in sellers.iter().enumerate() {
            exchange[a] = -allocation.local_deliveries(si);
            residual[a] = -allocation.grid_spill(si);
        }
        if collect_dump {
            dump = Some(LpDump {
                t,
                buyer_prosumers: buyers.iter().map(|&a| ids[a]).collect(),
                seller_prosumers: sellers.iter().map(|&a| ids[a]).collect(),
                demands_kwh: demands,
                supplies_kwh: supplies,
                seller_etas: etas,
                big_m,
                objective: allocation.objective(&costs),
                allocation: allocation.entries,
            });
        }
    }

    for (a, &i) in ids.iter().enumerate() {
        let p = &scenario.profiles[i];
        let (record, next) = step_with_battery(
            p.demand_kwh[t],
            p.pv_kwh[t],
            exchange[a],
            residual[a],
            &states[a],
            &specs[a],
            dt,
        );
        records[a].push(record);
        states[a] = next;
    }
    Ok(dump)
}

/// Re-runs a scenario with one prosumer removed; the marginal-loss
/// computation compares this against the full run.
pub fn run_counterfactual_without(
    scenario: &Scenario,
    mechanism: Mechanism,
    excluded: usize,
) -> Result<SimulationTrace, MechanismError> {
    let n = scenario.n_prosumers();
    if n < 2 {
        return Err(MechanismError::TooFewProsumers(n));
    }
    if excluded >= n {
        return Err(MechanismError::IndexOutOfRange { index: excluded, n });
    }
    let include: Vec<bool> = (0..n).map(|i| i != excluded).collect();
    run_simulation(scenario, mechanism, &include)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Scenario, ScenarioConfig};
    use approx::assert_abs_diff_eq;

    /// Scenario with hand-written one-interval profiles: (demand, pv, eta)
    /// per prosumer, default battery otherwise.
    fn tiny_scenario(rows: &[(f64, f64, f64)]) -> Scenario {
        let mut config = ScenarioConfig::default();
        config.n_prosumers = rows.len();
        config.days = 1;
        config.dt_hours = 0.25;
        let steps = config.n_steps();
        let profiles = rows
            .iter()
            .map(|&(d, pv, eta)| {
                let mut demand = vec![0.0; steps];
                let mut pv_series = vec![0.0; steps];
                demand[0] = d;
                pv_series[0] = pv;
                ProsumerProfile {
                    demand_kwh: demand,
                    pv_kwh: pv_series,
                    battery: BatterySpec::default().with_round_trip_eta(eta),
                }
            })
            .collect();
        Scenario::from_parts(config, profiles).unwrap()
    }

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn no_flexibility_sends_net_to_grid() {
        let scenario = tiny_scenario(&[(2.0, 0.5, 0.9), (0.5, 2.0, 0.9)]);
        let trace = run_simulation(&scenario, Mechanism::NoFlexibility, &all(2)).unwrap();
        let r0 = trace.record(0, 0);
        assert_eq!(
            (r0.net_kwh, r0.grid_import_kwh, r0.spill_kwh),
            (1.5, 1.5, 0.0)
        );
        let r1 = trace.record(1, 0);
        assert_eq!(
            (r1.net_kwh, r1.grid_import_kwh, r1.spill_kwh),
            (-1.5, 0.0, 1.5)
        );
        assert!(trace.theta_kwh.iter().all(|&t| t == 0.0));
        assert_eq!(trace.battery_sum(0), 0.0);
    }

    #[test]
    fn individual_control_charges_surplus_and_discharges_deficit() {
        let scenario = tiny_scenario(&[(0.5, 2.0, 0.81), (2.0, 0.5, 0.81)]);
        let trace = run_simulation(&scenario, Mechanism::Individual, &all(2)).unwrap();
        // Surplus 1.5: charge rate-bound at 0.325, rest spills.
        let r0 = trace.record(0, 0);
        assert_abs_diff_eq!(r0.battery_kwh, 0.325);
        assert_abs_diff_eq!(r0.net_kwh, -1.175);
        assert_abs_diff_eq!(r0.spill_kwh, 1.175);
        // Deficit 1.5 with the battery at its floor: nothing to deliver.
        let r1 = trace.record(1, 0);
        assert_eq!(r1.battery_kwh, 0.0);
        assert_abs_diff_eq!(r1.grid_import_kwh, 1.5);
        // Ex is identically zero outside the exchange mechanism.
        assert!((0..2).all(|a| trace.exchange_sum(a) == 0.0));
    }

    #[test]
    fn exchange_clears_toward_low_eta_seller() {
        // Buyer needs 5; sellers offer 5 each at eta 0.7 / 0.9. The 0.7
        // seller's energy is cheapest to place locally, so it covers the
        // buyer entirely; the 0.9 seller keeps its surplus, charges at the
        // 0.325 kWh rate cap, and spills the rest.
        let scenario = tiny_scenario(&[(5.0, 0.0, 0.9), (0.0, 5.0, 0.7), (0.0, 5.0, 0.9)]);
        let trace = run_simulation(&scenario, Mechanism::Exchange, &all(3)).unwrap();
        let buyer = trace.record(0, 0);
        assert_abs_diff_eq!(buyer.exchange_kwh, 5.0);
        assert_eq!(buyer.battery_kwh, 0.0);
        assert_abs_diff_eq!(buyer.grid_import_kwh, 0.0);
        let low = trace.record(1, 0);
        assert_abs_diff_eq!(low.exchange_kwh, -5.0);
        assert_eq!(low.battery_kwh, 0.0);
        assert_abs_diff_eq!(low.spill_kwh, 0.0);
        let high = trace.record(2, 0);
        assert_abs_diff_eq!(high.exchange_kwh, 0.0);
        assert_abs_diff_eq!(high.battery_kwh, 0.325);
        assert_abs_diff_eq!(high.spill_kwh, 4.675);
        // Local exchange conserves energy.
        let total: f64 = (0..3).map(|a| trace.record(a, 0).exchange_kwh).sum();
        assert_abs_diff_eq!(total, 0.0);
    }

    #[test]
    fn all_zero_nets_produce_no_activity() {
        let scenario = tiny_scenario(&[(1.0, 1.0, 0.9), (0.5, 0.5, 0.9)]);
        let trace = run_simulation(&scenario, Mechanism::Exchange, &all(2)).unwrap();
        for a in 0..2 {
            let r = trace.record(a, 0);
            assert_eq!(r.exchange_kwh, 0.0);
            assert_eq!(r.battery_kwh, 0.0);
            assert_eq!(r.net_kwh, 0.0);
        }
    }

    #[test]
    fn singleton_exchange_equals_individual_exactly() {
        let mut config = ScenarioConfig::default();
        config.n_prosumers = 1;
        config.days = 1;
        let scenario = Scenario::from_config(&config).unwrap();
        let m1 = run_simulation(&scenario, Mechanism::Individual, &all(1)).unwrap();
        let m2 = run_simulation(&scenario, Mechanism::Exchange, &all(1)).unwrap();
        assert_eq!(m1.records, m2.records);
        assert_eq!(m1.theta_kwh, m2.theta_kwh);
    }

    #[test]
    fn counterfactual_drops_exactly_one_prosumer() {
        let scenario = tiny_scenario(&[(5.0, 0.0, 0.9), (0.0, 5.0, 0.7), (0.0, 5.0, 0.9)]);
        let cf = run_counterfactual_without(&scenario, Mechanism::Exchange, 1).unwrap();
        assert_eq!(cf.prosumer_ids, vec![0, 2]);
        // Without the 0.7 seller the 0.9 seller trades with the buyer.
        assert_abs_diff_eq!(cf.record(1, 0).exchange_kwh, -5.0);
        let direct = run_simulation(&scenario, Mechanism::Exchange, &[true, false, true]).unwrap();
        assert_eq!(cf, direct);
    }

    #[test]
    fn counterfactual_requires_two_prosumers() {
        let scenario = tiny_scenario(&[(1.0, 0.0, 0.9)]);
        assert!(matches!(
            run_counterfactual_without(&scenario, Mechanism::Exchange, 0),
            Err(MechanismError::TooFewProsumers(1))
        ));
    }

    #[test]
    fn include_mask_is_validated() {
        let scenario = tiny_scenario(&[(1.0, 0.0, 0.9), (0.0, 1.0, 0.9)]);
        assert!(matches!(
            run_simulation(&scenario, Mechanism::Exchange, &[true]),
            Err(MechanismError::IncludeMaskLength {
                got: 1,
                expected: 2
            })
        ));
        assert!(matches!(
            run_simulation(&scenario, Mechanism::Exchange, &[false, false]),
            Err(MechanismError::EmptySubset)
        ));
    }

    #[test]
    fn dumps_capture_cleared_intervals_only() {
        let scenario = tiny_scenario(&[(5.0, 0.0, 0.9), (0.0, 5.0, 0.7)]);
        let (_, dumps) =
            run_simulation_with_dumps(&scenario, Mechanism::Exchange, &all(2), true).unwrap();
        // Only interval 0 has both sides present.
        assert_eq!(dumps.len(), 1);
        assert_eq!(dumps[0].t, 0);
        assert_eq!(dumps[0].buyer_prosumers, vec![0]);
        assert_eq!(dumps[0].seller_prosumers, vec![1]);
        assert_abs_diff_eq!(dumps[0].objective, 5.0 * 0.7);
        let (_, none) =
            run_simulation_with_dumps(&scenario, Mechanism::Individual, &all(2), true).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn mechanism_round_trips_through_serde_and_str() {
        for m in Mechanism::ALL {
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, m.index().to_string());
            let back: Mechanism = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
            let parsed: Mechanism = m.to_string().parse().unwrap();
            assert_eq!(parsed, m);
        }
        assert!(serde_json::from_str::<Mechanism>("7").is_err());
        assert!("x".parse::<Mechanism>().is_err());
    }
}
