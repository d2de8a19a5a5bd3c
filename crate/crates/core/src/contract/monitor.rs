use serde::{Deserialize, Serialize};

use super::ContractId;
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Obligation {
    DeliverEnergy,
    MaintainSpeed,
    EvPresent,
    PayOnCompletion,
}

impl Obligation {
    pub const ALL: [Obligation; 4] = [
        Obligation::DeliverEnergy,
        Obligation::MaintainSpeed,
        Obligation::EvPresent,
        Obligation::PayOnCompletion,
    ];

    /// True when the station carries the obligation, false for the EV.
    pub fn on_station(self) -> bool {
        matches!(self, Obligation::DeliverEnergy | Obligation::MaintainSpeed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sensor {
    EnergyMeter,
    PowerMeter,
    Gps,
    PaymentEndpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Minor,
    Severe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationMonitor {
    pub obligation: Obligation,
    pub responsible: AgentId,
    pub sensor: Sensor,
    pub threshold: u64,
    pub tolerance: u64,
}

impl ObligationMonitor {
    /// `None` when `observed` is within tolerance of the threshold. Only the
    /// speed obligation grades deviations; the others are met or not.
    pub fn evaluate(&self, observed: u64, minor_percent: u8) -> Option<Severity> {
        if observed + self.tolerance >= self.threshold {
            return None;
        }
        match self.obligation {
            Obligation::MaintainSpeed => classify(self.threshold, observed, minor_percent),
            _ => Some(Severity::Severe),
        }
    }
}

/// Grades a shortfall: up to `minor_percent` of `threshold` is minor.
pub fn classify(threshold: u64, observed: u64, minor_percent: u8) -> Option<Severity> {
    if observed >= threshold {
        return None;
    }
    let deviation = threshold - observed;
    if deviation as u128 * 100 <= threshold as u128 * minor_percent as u128 {
        Some(Severity::Minor)
    } else {
        Some(Severity::Severe)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub contract: ContractId,
    pub obligation: Obligation,
    pub responsible: AgentId,
    pub observed: u64,
    pub threshold: u64,
    pub tick: u64,
    pub severity: Severity,
}
