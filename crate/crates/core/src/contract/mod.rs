//! Charging contracts and their lifecycle: initialization, negotiation,
//! preparation, enactment, mediation, rollback and termination.

mod accounts;
mod lifecycle;
mod monitor;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use accounts::{Account, Accounts, FundsError, PaymentKind};
pub use lifecycle::{
    create_contract, enact_tick, mediate, negotiate, prepare, rollback, start_negotiation, ContractTemplate,
    EnactStatus, Liveness, Parties, SensorReadings, TickReport,
};
pub use monitor::{classify, Obligation, ObligationMonitor, Sensor, Severity, Violation};

use crate::auction::Price;
use crate::encoding::canonical;
use crate::identity::{AgentId, KeyRegistry, SignatureBytes};
use crate::ledger::{HashDigest, LedgerError};
use crate::marketplace::PowerSource;
use crate::mobility::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractTerms {
    pub station: AgentId,
    /// Private owner collecting the station's payments, if any.
    pub owner: Option<AgentId>,
    pub ev: AgentId,
    pub station_location: NodeId,
    pub power_source: PowerSource,
    /// Half-open tick range `[start, end)`.
    pub timeframe: (u64, u64),
    pub charging_speed: u32,
    pub expected_energy: u64,
    pub price: Price,
    pub penalty: u64,
    /// Flat fee in cents added to the final settlement, outside the per-kWh price.
    pub fixed_fee: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
pub enum TermsError {
    #[error("timeframe start must precede end")]
    StartBeforeEnd,
    #[error("charging speed must be positive")]
    ZeroSpeed,
    #[error("expected energy must be positive")]
    ZeroEnergy,
    #[error("expected energy exceeds what the speed delivers within the timeframe")]
    Capacity,
}

impl ContractTerms {
    pub fn validate(&self) -> Result<(), TermsError> {
        let (start, end) = self.timeframe;
        if start >= end {
            return Err(TermsError::StartBeforeEnd);
        }
        if self.charging_speed == 0 {
            return Err(TermsError::ZeroSpeed);
        }
        if self.expected_energy == 0 {
            return Err(TermsError::ZeroEnergy);
        }
        // Wh <= W * minutes / 60
        if self.expected_energy as u128 * 60 > self.charging_speed as u128 * (end - start) as u128 {
            return Err(TermsError::Capacity);
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical(self)
    }

    pub fn digest(&self) -> HashDigest {
        HashDigest::of(&self.encode())
    }

    /// Account that receives and pays money on the station's behalf.
    pub fn station_account(&self) -> &AgentId {
        self.owner.as_ref().unwrap_or(&self.station)
    }

    pub fn counterparty(&self, party: &AgentId) -> Option<&AgentId> {
        if party == &self.ev {
            Some(&self.station)
        } else if party == &self.station {
            Some(&self.ev)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Initialization,
    Negotiation,
    Preparation,
    Enactment,
    Mediation,
    Rollback,
    Terminated(Termination),
}

impl Stage {
    pub fn is_terminated(self) -> bool {
        matches!(self, Stage::Terminated(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Initialization => "initialization",
            Stage::Negotiation => "negotiation",
            Stage::Preparation => "preparation",
            Stage::Enactment => "enactment",
            Stage::Mediation => "mediation",
            Stage::Rollback => "rollback",
            Stage::Terminated(Termination::Completed) => "completed",
            Stage::Terminated(Termination::Failed) => "failed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The complete lifecycle transition relation.
pub fn transition_allowed(from: Stage, to: Stage) -> bool {
    use Stage::*;
    use Termination::*;
    matches!(
        (from, to),
        (Initialization, Negotiation)
            | (Negotiation, Preparation | Rollback)
            | (Preparation, Enactment | Rollback)
            | (Enactment, Enactment | Mediation | Terminated(Completed))
            | (Mediation, Enactment | Terminated(Failed) | Rollback)
            | (Rollback, Terminated(Failed))
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionReason {
    NoAgreement,
    InsufficientFunds,
    LivenessFailure,
    MissingSignature,
    SevereViolation,
    MinorViolation,
    Requested,
}

/// What one party keeps: the agreed terms plus its own obligations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalCopy {
    pub party: AgentId,
    pub terms: ContractTerms,
    pub obligations: Vec<Obligation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractEntry {
    pub tick: u64,
    pub event: crate::events::SimEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingContract {
    pub id: ContractId,
    pub terms: ContractTerms,
    pub stage: Stage,
    pub signatures: Vec<(AgentId, SignatureBytes)>,
    pub local_copies: Vec<LocalCopy>,
    pub monitors: Vec<ObligationMonitor>,
    pub event_log: Vec<ContractEntry>,
    /// Deviation (percent of threshold) still classed as minor.
    pub minor_percent: u8,
    pub delivered_wh: u64,
    pub escrowed: u64,
    pub penalties_paid: u64,
}

impl ChargingContract {
    /// Both parties have signed and each signature verifies over the current terms.
    pub fn signatures_valid(&self, registry: &KeyRegistry) -> bool {
        let msg = self.terms.encode();
        [&self.terms.ev, &self.terms.station].iter().all(|party| {
            self.signatures
                .iter()
                .any(|(id, sig)| id == *party && registry.verify(id, &msg, &sig.0))
        })
    }

    pub fn local_copies_agree(&self) -> bool {
        self.local_copies.windows(2).all(|w| w[0].terms.encode() == w[1].terms.encode())
    }

    /// Stage transitions in the order they happened.
    pub fn transitions(&self) -> impl Iterator<Item = (Stage, Stage)> + '_ {
        self.event_log.iter().filter_map(|e| match &e.event {
            crate::events::SimEvent::StageTransition { from, to, .. } => Some((*from, *to)),
            _ => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("invalid terms: {0}")]
    InvalidTerms(TermsError),
    #[error("operation {op} not allowed in stage {stage}")]
    WrongStage { stage: Stage, op: &'static str },
    #[error("tick {tick} outside contract timeframe {start}..{end}")]
    TickOutOfWindow { tick: u64, start: u64, end: u64 },
    #[error("contract already terminated")]
    AlreadyTerminated,
    #[error("agent {0} is not registered")]
    UnknownAgent(AgentId),
    #[error("parties do not match the contract")]
    PartyMismatch,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Funds(#[from] FundsError),
}
