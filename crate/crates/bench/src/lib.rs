//! Shared fixtures for the benchmark targets.

use coopex::solver::ConnectivityMatrix;
use coopex::{Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fully-connected fractional clearing instance.
pub struct ClearingFixture {
    pub demands: Vec<f64>,
    pub supplies: Vec<f64>,
    pub etas: Vec<f64>,
    pub connectivity: ConnectivityMatrix,
}

pub fn clearing_fixture(n_buyers: usize, n_sellers: usize, seed: u64) -> ClearingFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ClearingFixture {
        demands: (0..n_buyers).map(|_| rng.gen_range(0.05..4.0)).collect(),
        supplies: (0..n_sellers).map(|_| rng.gen_range(0.05..4.0)).collect(),
        etas: (0..n_sellers).map(|_| rng.gen_range(0.6..1.0)).collect(),
        connectivity: ConnectivityMatrix::fully_connected(n_buyers, n_sellers),
    }
}

/// A synthetic week at quarter-hour resolution with the default battery.
pub fn week_scenario(n_prosumers: usize) -> Scenario {
    let config = ScenarioConfig {
        n_prosumers,
        ..ScenarioConfig::default()
    };
    Scenario::from_config(&config).expect("default config is valid")
}
