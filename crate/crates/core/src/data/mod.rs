//! Scenario construction: configuration, profile ingestion (CSV or
//! synthetic), per-prosumer PV shifting, and efficiency sampling.
//!
//! Everything here is a pure function of the config (including its
//! seed): identical configs resolve to identical [`Scenario`]s. Each
//! randomized stage draws from its own seed stream (see [`crate::seed`]),
//! so e.g. changing the efficiency spread never perturbs the generated
//! load profiles.

mod profiles_csv;
mod synthetic;

pub use profiles_csv::{load_profiles, write_profiles_csv};
pub use synthetic::synthesize_profiles;

use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mechanism::{BatterySpec, ProfileError, ProsumerProfile};
use crate::seed::derive_seed;

/// Seed-stream tags; frozen so stored scenarios stay reproducible.
pub(crate) const STREAM_PROFILE: u64 = 1;
pub(crate) const STREAM_SHIFT: u64 = 2;
pub(crate) const STREAM_ETA: u64 = 3;
pub(crate) const STREAM_SELECT: u64 = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("profile {index}: {source}")]
    Profile { index: usize, source: ProfileError },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: household {household} has {got} intervals, expected {expected}")]
    RaggedSeries {
        path: String,
        household: String,
        got: usize,
        expected: usize,
    },
    #[error("{path}: {need} households required, found {got}")]
    InsufficientHouseholds {
        path: String,
        need: usize,
        got: usize,
    },
}

/// How to pick `n_prosumers` households out of a larger CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HouseholdSelection {
    /// Take households in file order.
    #[default]
    First,
    /// Seeded uniform subset (kept in file order after drawing).
    RandomSubset,
}

/// Where profiles come from: `"synthetic"`, a bare CSV path, or
/// `{"csv": path, "selection": "random_subset"}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Csv {
        path: PathBuf,
        selection: HouseholdSelection,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DataSourceRepr {
    Tag(String),
    Csv {
        csv: PathBuf,
        #[serde(default)]
        selection: HouseholdSelection,
    },
}

impl Serialize for DataSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            DataSource::Synthetic => serializer.serialize_str("synthetic"),
            DataSource::Csv { path, selection } if *selection == HouseholdSelection::First => {
                serializer.serialize_str(&path.to_string_lossy())
            }
            DataSource::Csv { path, selection } => DataSourceRepr::Csv {
                csv: path.clone(),
                selection: *selection,
            }
            .serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for DataSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match DataSourceRepr::deserialize(deserializer)? {
            DataSourceRepr::Tag(tag) if tag == "synthetic" => Ok(DataSource::Synthetic),
            DataSourceRepr::Tag(path) => Ok(DataSource::Csv {
                path: PathBuf::from(path),
                selection: HouseholdSelection::First,
            }),
            DataSourceRepr::Csv { csv, selection } => Ok(DataSource::Csv {
                path: csv,
                selection,
            }),
        }
    }
}

/// Full experiment configuration; JSON config files mirror this
/// field-for-field and unset fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_prosumers: usize,
    pub days: usize,
    pub dt_hours: f64,
    /// Grid price, money per kWh, constant over the cycle.
    pub price: f64,
    pub eta_mean: f64,
    pub eta_std: f64,
    /// Per-prosumer PV curves are circularly shifted within the day by a
    /// uniform draw from [0, this] hours.
    pub pv_shift_span_hours: f64,
    pub seed: u64,
    /// Grid-arc penalty for the clearing solve.
    pub big_m: f64,
    /// Reported α when the rationality search finds no feasible value.
    pub alpha_default: f64,
    pub battery: BatterySpec,
    pub data_source: DataSource,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_prosumers: 10,
            days: 7,
            dt_hours: 0.25,
            price: 0.3,
            eta_mean: 0.9,
            eta_std: 0.05,
            pv_shift_span_hours: 6.0,
            seed: 42,
            big_m: 1.0e6,
            alpha_default: 0.9,
            battery: BatterySpec::default(),
            data_source: DataSource::Synthetic,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::Config(msg));
        if self.n_prosumers == 0 {
            return fail("n_prosumers must be at least 1".into());
        }
        if self.days == 0 {
            return fail("days must be at least 1".into());
        }
        if !self.dt_hours.is_finite() || self.dt_hours <= 0.0 || self.dt_hours > 24.0 {
            return fail(format!(
                "dt_hours must lie in (0, 24], got {}",
                self.dt_hours
            ));
        }
        let spd = 24.0 / self.dt_hours;
        if (spd - spd.round()).abs() > 1e-9 {
            return fail(format!(
                "dt_hours {} does not divide a 24 h day evenly",
                self.dt_hours
            ));
        }
        if !self.price.is_finite() || self.price <= 0.0 {
            return fail(format!("price must be positive, got {}", self.price));
        }
        if !self.eta_mean.is_finite() || !self.eta_std.is_finite() || self.eta_std < 0.0 {
            return fail(format!(
                "efficiency distribution ({}, {}) is invalid",
                self.eta_mean, self.eta_std
            ));
        }
        if !self.pv_shift_span_hours.is_finite() || self.pv_shift_span_hours < 0.0 {
            return fail(format!(
                "pv_shift_span_hours must be nonnegative, got {}",
                self.pv_shift_span_hours
            ));
        }
        if !self.big_m.is_finite() || self.big_m <= 1.0 {
            return fail(format!("big_m must exceed 1, got {}", self.big_m));
        }
        if !self.alpha_default.is_finite() || !(0.0..1.0).contains(&self.alpha_default) {
            return fail(format!(
                "alpha_default must lie in [0, 1), got {}",
                self.alpha_default
            ));
        }
        self.battery
            .validate()
            .map_err(|e| DataError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.dt_hours).round() as usize
    }

    pub fn n_steps(&self) -> usize {
        self.days * self.steps_per_day()
    }
}

/// A fully materialized scenario: resolved config plus per-prosumer
/// profiles with shifts and sampled efficiencies applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub profiles: Vec<ProsumerProfile>,
    pub start: NaiveDateTime,
}

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

impl Scenario {
    /// Resolves a config into a concrete scenario: loads or synthesizes
    /// profiles, applies seeded per-prosumer PV shifts, and samples
    /// per-prosumer battery efficiencies.
    pub fn from_config(config: &ScenarioConfig) -> Result<Self, DataError> {
        config.validate()?;
        let (mut profiles, start) = match &config.data_source {
            DataSource::Synthetic => (synthesize_profiles(config), default_start()),
            DataSource::Csv { path, selection } => {
                profiles_csv::load_with_start(path, config, *selection)?
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_SHIFT]));
        for profile in profiles.iter_mut() {
            let shift = rng.gen_range(0.0..=config.pv_shift_span_hours);
            *profile = shift_pv(profile, shift, config.dt_hours);
        }
        for (profile, eta) in profiles.iter_mut().zip(sample_efficiencies(config)) {
            profile.battery = config.battery.with_round_trip_eta(eta);
        }
        Self::with_start(config.clone(), profiles, start)
    }

    /// Builds a scenario from explicit profiles (tests, custom data);
    /// profiles are taken as-is — no shifting or efficiency sampling.
    pub fn from_parts(
        config: ScenarioConfig,
        profiles: Vec<ProsumerProfile>,
    ) -> Result<Self, DataError> {
        Self::with_start(config, profiles, default_start())
    }

    fn with_start(
        config: ScenarioConfig,
        profiles: Vec<ProsumerProfile>,
        start: NaiveDateTime,
    ) -> Result<Self, DataError> {
        config.validate()?;
        if profiles.len() != config.n_prosumers {
            return Err(DataError::Config(format!(
                "{} profiles provided for n_prosumers = {}",
                profiles.len(),
                config.n_prosumers
            )));
        }
        let steps = config.n_steps();
        for (index, profile) in profiles.iter().enumerate() {
            profile
                .validate(steps)
                .map_err(|source| DataError::Profile { index, source })?;
        }
        Ok(Self {
            config,
            profiles,
            start,
        })
    }

    pub fn n_prosumers(&self) -> usize {
        self.profiles.len()
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps()
    }

    /// Per-prosumer round-trip efficiencies.
    pub fn etas(&self) -> Vec<f64> {
        self.profiles
            .iter()
            .map(|p| p.battery.round_trip_eta)
            .collect()
    }
}

/// Circularly shifts the PV series within each day by `shift_hours`
/// (rounded to whole intervals); demand is untouched and each day's PV
/// total is preserved exactly.
pub fn shift_pv(profile: &ProsumerProfile, shift_hours: f64, dt_hours: f64) -> ProsumerProfile {
    let spd = (24.0 / dt_hours).round() as usize;
    debug_assert!(spd > 0 && profile.pv_kwh.len() % spd == 0);
    let k = ((shift_hours / dt_hours).round() as usize) % spd;
    let mut shifted = profile.clone();
    if k == 0 {
        return shifted;
    }
    for day in 0..profile.pv_kwh.len() / spd {
        let base = day * spd;
        for idx in 0..spd {
            // The value at `idx` moves to `idx + k` within the day.
            shifted.pv_kwh[base + (idx + k) % spd] = profile.pv_kwh[base + idx];
        }
    }
    shifted
}

/// Draws `n_prosumers` round-trip efficiencies from the configured
/// normal distribution, clipped into [0.05, 1.0]; clipping (rather than
/// resampling) keeps the draw count independent of the parameters.
pub fn sample_efficiencies(config: &ScenarioConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_ETA]));
    let normal = Normal::new(config.eta_mean, config.eta_std)
        .expect("validated: finite mean, nonnegative std");
    (0..config.n_prosumers)
        .map(|_| normal.sample(&mut rng).clamp(0.05, 1.0))
        .collect()
}
