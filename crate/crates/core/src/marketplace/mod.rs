//! Station profiles, owner constraints, reserve pricing and matchmaking.

mod matching;
mod pricing;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matching::{
    budget_cap, find_candidates, matchmake, BiddingStrategy, Candidate, MarketState, MatchDraft, MatchRequest,
    MatchRound, StationEntry, TruthfulBidding,
};
pub use pricing::{quote_reserve, PricingPolicy, WeatherPoint, WeatherState, WeatherTrace};

use crate::auction::Price;
use crate::identity::AgentId;
use crate::mobility::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSource {
    Solar,
    Wind,
    Coal,
    Nuclear,
    GridMix,
}

impl PowerSource {
    pub fn is_renewable(self) -> bool {
        matches!(self, PowerSource::Solar | PowerSource::Wind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnerKind {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("max_distance must be positive")]
    ZeroDistance,
    #[error("free window start must precede end")]
    EmptyWindow,
    #[error("allowed_sources must not be empty")]
    NoSources,
    #[error("station needs at least one slot")]
    NoSlots,
    #[error("charging speed must be positive")]
    ZeroSpeed,
    #[error("pricing: {0}")]
    Pricing(String),
}

/// What an EV owner is willing to accept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerConstraints {
    pub max_price: Price,
    pub max_distance: u64,
    /// Half-open tick range during which the car may be away.
    pub free_window: (u64, u64),
    pub allowed_sources: BTreeSet<PowerSource>,
    pub required_energy: u64,
}

impl OwnerConstraints {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.max_distance == 0 {
            return Err(ProfileError::ZeroDistance);
        }
        if self.free_window.0 >= self.free_window.1 {
            return Err(ProfileError::EmptyWindow);
        }
        if self.allowed_sources.is_empty() {
            return Err(ProfileError::NoSources);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationProfile {
    pub id: AgentId,
    pub location: NodeId,
    pub power_source: PowerSource,
    pub charging_speed: u32,
    pub slots: u32,
    pub owner_kind: OwnerKind,
    /// Private owner that collects the station's revenue.
    #[serde(default)]
    pub owner: Option<AgentId>,
    pub pricing: PricingPolicy,
    /// Cents per minor violation written into this station's contracts.
    #[serde(default)]
    pub penalty: u64,
}

impl StationProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.slots == 0 {
            return Err(ProfileError::NoSlots);
        }
        if self.charging_speed == 0 {
            return Err(ProfileError::ZeroSpeed);
        }
        self.pricing.validate().map_err(ProfileError::Pricing)
    }
}
