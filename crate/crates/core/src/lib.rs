//! Desk-scale simulator and settlement library for residential energy
//! cooperatives.
//!
//! A cooperative of prosumers (households with PV and a battery) trades
//! energy on a local exchange cleared once per quarter-hour. The crate
//! covers the full pipeline:
//!
//! * [`market`] — offer and commodity types shared by all modules;
//! * [`solver`] — the per-interval allocation solved as a transportation
//!   problem with the grid as slack source and sink;
//! * [`mechanism`] — battery dispatch simulation under three mechanisms
//!   (no flexibility, individual control, exchange and control);
//! * [`settlement`] — losses, difference-evaluation rewards, utilities,
//!   the price-split search, and welfare/fairness metrics;
//! * [`data`] — profile ingestion, seeded synthetic scenario generation,
//!   PV shifting, and efficiency sampling.
//!
//! Everything is deterministic given a scenario seed; distinct runs are
//! pure functions of their inputs and may execute concurrently.

pub mod data;
pub mod market;
pub mod mechanism;
pub mod seed;
pub mod settlement;
pub mod solver;

pub use data::{DataSource, Scenario, ScenarioConfig};
pub use market::{
    make_offer, net_position, positive_part, EnergyCommodity, MarketOffer, MarketRole, OfferFlag,
};
pub use mechanism::{
    run_counterfactual_without, run_simulation, BatterySpec, BatteryState, Mechanism,
    ProsumerProfile, SimulationTrace,
};
pub use settlement::{settle_scenario, SettlementReport};
pub use solver::{
    brute_force_allocation, build_cost_matrix, solve_allocation, AllocationMatrix,
    ConnectivityMatrix, CostMatrix,
};
