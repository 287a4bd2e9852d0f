//! Simulation output: one record per included prosumer per interval,
//! plus per-prosumer restoration offsets.

use std::io::{self, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::Mechanism;
use crate::market::positive_part;

/// One prosumer-interval outcome. All energies are kWh for the interval;
/// `exchange_kwh` is positive when received and negative when delivered,
/// `battery_kwh` positive when charging and negative when discharging.
/// `net_kwh` is the signed net position toward the grid after exchange
/// and dispatch; imports and spill are its positive and negative parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub demand_kwh: f64,
    pub pv_kwh: f64,
    pub exchange_kwh: f64,
    pub battery_kwh: f64,
    pub net_kwh: f64,
    pub grid_import_kwh: f64,
    pub spill_kwh: f64,
    pub soc_kwh: f64,
}

impl StepRecord {
    /// Builds a record from the signed components, deriving the net
    /// position and its grid/spill split.
    pub(super) fn from_parts(
        demand_kwh: f64,
        pv_kwh: f64,
        exchange_kwh: f64,
        battery_kwh: f64,
        soc_kwh: f64,
    ) -> Self {
        let net_kwh = demand_kwh - pv_kwh - exchange_kwh + battery_kwh;
        Self {
            demand_kwh,
            pv_kwh,
            exchange_kwh,
            battery_kwh,
            net_kwh,
            grid_import_kwh: positive_part(net_kwh),
            spill_kwh: positive_part(-net_kwh),
            soc_kwh,
        }
    }
}

/// Full trace of one simulation run over the operation cycle.
///
/// `records[a][t]` addresses included prosumers by their position `a` in
/// `prosumer_ids`, which stores the original scenario indices (they
/// differ under counterfactual runs that exclude a prosumer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub mechanism: Mechanism,
    pub dt_hours: f64,
    pub start: NaiveDateTime,
    pub prosumer_ids: Vec<usize>,
    pub records: Vec<Vec<StepRecord>>,
    pub theta_kwh: Vec<f64>,
}

impl SimulationTrace {
    pub fn n_agents(&self) -> usize {
        self.prosumer_ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.records.first().map_or(0, Vec::len)
    }

    pub fn record(&self, agent: usize, t: usize) -> &StepRecord {
        &self.records[agent][t]
    }

    /// Restoration offset of the agent at position `agent`.
    pub fn theta(&self, agent: usize) -> f64 {
        self.theta_kwh[agent]
    }

    pub fn battery_sum(&self, agent: usize) -> f64 {
        self.records[agent].iter().map(|r| r.battery_kwh).sum()
    }

    pub fn exchange_sum(&self, agent: usize) -> f64 {
        self.records[agent].iter().map(|r| r.exchange_kwh).sum()
    }

    pub fn grid_import_sum(&self, agent: usize) -> f64 {
        self.records[agent].iter().map(|r| r.grid_import_kwh).sum()
    }

    pub fn spill_sum(&self, agent: usize) -> f64 {
        self.records[agent].iter().map(|r| r.spill_kwh).sum()
    }

    /// Writes the trace as CSV, one row per (prosumer, interval), ordered
    /// by prosumer then time. Float formatting is the shortest exact
    /// representation, so output is byte-stable for identical runs.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "prosumer,t,d,pv,ex,pb,D,grid,spill,soc")?;
        for (a, &id) in self.prosumer_ids.iter().enumerate() {
            for (t, r) in self.records[a].iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    id,
                    t,
                    r.demand_kwh,
                    r.pv_kwh,
                    r.exchange_kwh,
                    r.battery_kwh,
                    r.net_kwh,
                    r.grid_import_kwh,
                    r.spill_kwh,
                    r.soc_kwh
                )?;
            }
        }
        Ok(())
    }
}
