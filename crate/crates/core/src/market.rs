//! Market offers, commodities, and participant roles.
//!
//! An offer wraps an energy commodity (a short time series ending in a
//! zero quantity) together with a bid/ask flag. Asks from prosumers also
//! carry the round-trip efficiency of the seller's battery; that value is
//! the only thing the clearing path reads besides the quantity. Price,
//! order kind, count, and expiry are carried for format fidelity but are
//! never consulted: the exchange clears all bids and asks.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("commodity quantities and timestamps differ in length ({quantities} vs {timestamps})")]
    LengthMismatch {
        quantities: usize,
        timestamps: usize,
    },
    #[error("commodity quantity at index {index} is negative ({value})")]
    NegativeQuantity { index: usize, value: f64 },
    #[error("commodity must end with a zero quantity (last is {last})")]
    NonZeroTail { last: f64 },
    #[error("commodity timestamps must be strictly increasing")]
    NonMonotonicTimestamps,
    #[error("commodity must contain at least one interval")]
    Empty,
    #[error("round-trip efficiency {0} outside (0, 1]")]
    InvalidEfficiency(f64),
    #[error("zero net position: prosumer abstains this interval")]
    ZeroNet,
}

/// Energy commodity: equal-length quantity and timestamp vectors, with the
/// convention that the final quantity is zero (it closes the series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCommodity {
    /// kWh per interval, all nonnegative, last entry zero.
    pub quantities: Vec<f64>,
    /// Interval start times, strictly increasing.
    pub timestamps: Vec<NaiveDateTime>,
}

impl EnergyCommodity {
    pub fn new(quantities: Vec<f64>, timestamps: Vec<NaiveDateTime>) -> Result<Self, MarketError> {
        if quantities.is_empty() {
            return Err(MarketError::Empty);
        }
        if quantities.len() != timestamps.len() {
            return Err(MarketError::LengthMismatch {
                quantities: quantities.len(),
                timestamps: timestamps.len(),
            });
        }
        if let Some((index, &value)) = quantities
            .iter()
            .enumerate()
            .find(|(_, q)| !q.is_finite() || **q < 0.0)
        {
            return Err(MarketError::NegativeQuantity { index, value });
        }
        let last = *quantities.last().unwrap();
        if last != 0.0 {
            return Err(MarketError::NonZeroTail { last });
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketError::NonMonotonicTimestamps);
        }
        Ok(Self {
            quantities,
            timestamps,
        })
    }

    /// Single-interval commodity: quantity `q_kwh` over `[start, start + dt)`,
    /// closed by the zero entry at the interval end.
    pub fn single(q_kwh: f64, start: NaiveDateTime, dt_hours: f64) -> Result<Self, MarketError> {
        let end = start + chrono::Duration::seconds((dt_hours * 3600.0).round() as i64);
        Self::new(vec![q_kwh, 0.0], vec![start, end])
    }

    /// Quantity of the opening interval (what a one-shot offer trades).
    pub fn interval_quantity(&self) -> f64 {
        self.quantities[0]
    }

    pub fn start(&self) -> NaiveDateTime {
        self.timestamps[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferFlag {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Limit,
    FillOrKill,
}

/// A market offer. Only `commodity`, `flag`, and `efficiency` are read by
/// the clearing path; the remaining fields are inert.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOffer {
    pub commodity: EnergyCommodity,
    /// Money per kWh. Carried, never read: the mechanism clears everything.
    pub price: Option<f64>,
    pub flag: OfferFlag,
    /// Offer count n. Carried, never read.
    pub quantity_count: Option<u32>,
    /// Limit vs fill-or-kill. Carried, never read.
    pub order_kind: OrderKind,
    /// Expiry timestamp. Carried, never read.
    pub expiry: Option<NaiveDateTime>,
    /// Round-trip efficiency of the seller's flexible device, in (0, 1].
    /// Present exactly when the offer is an ask from a non-grid seller.
    pub efficiency: Option<f64>,
}

impl MarketOffer {
    pub fn quantity(&self) -> f64 {
        self.commodity.interval_quantity()
    }

    pub fn is_bid(&self) -> bool {
        self.flag == OfferFlag::Bid
    }

    /// Wire representation of the cleared fields.
    pub fn to_wire(&self) -> OfferWire {
        OfferWire {
            flag: self.flag,
            q_kwh: self.quantity(),
            t: self.commodity.start(),
            eta: self.efficiency,
            price: self.price,
        }
    }
}

/// JSON schema for offer exchange:
/// `{"flag": "bid"|"ask", "q_kwh": number, "t": ISO-8601, "eta": number|null, "price": number|null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferWire {
    pub flag: OfferFlag,
    pub q_kwh: f64,
    pub t: NaiveDateTime,
    pub eta: Option<f64>,
    pub price: Option<f64>,
}

/// Market participant: a prosumer by index, or the distinguished grid
/// participant that appears in both the buyer and the seller set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarketRole {
    Prosumer(usize),
    Grid,
}

impl MarketRole {
    pub fn is_grid(&self) -> bool {
        matches!(self, MarketRole::Grid)
    }
}

/// `max(x, 0)`: grid import from a signed net demand, spill from its negation.
pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Raw net position before exchange and battery: demand minus generation.
/// Positive marks a buyer this interval, negative a seller, zero neither.
pub fn net_position(demand_kwh: f64, pv_kwh: f64) -> f64 {
    demand_kwh - pv_kwh
}

/// Builds the offer a prosumer submits for one interval.
///
/// A positive net yields a bid for `net` kWh; a negative net yields an ask
/// for `|net|` kWh carrying the seller's round-trip efficiency. A zero net
/// is rejected: the prosumer abstains rather than submitting a degenerate
/// offer.
pub fn make_offer(
    net_kwh: f64,
    efficiency: f64,
    interval_start: NaiveDateTime,
    dt_hours: f64,
) -> Result<MarketOffer, MarketError> {
    if net_kwh == 0.0 {
        return Err(MarketError::ZeroNet);
    }
    let (flag, quantity, eta) = if net_kwh > 0.0 {
        (OfferFlag::Bid, net_kwh, None)
    } else {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(MarketError::InvalidEfficiency(efficiency));
        }
        (OfferFlag::Ask, -net_kwh, Some(efficiency))
    };
    Ok(MarketOffer {
        commodity: EnergyCommodity::single(quantity, interval_start, dt_hours)?,
        price: None,
        flag,
        quantity_count: None,
        order_kind: OrderKind::Limit,
        expiry: None,
        efficiency: eta,
    })
}
