//! Everything that ends up on the ledger.

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionOutcome, Price, Role};
use crate::auction::Nonce;
use crate::contract::{Account, ContractId, ContractTerms, PaymentKind, Severity, Stage, TransitionReason, Violation};
use crate::encoding::canonical;
use crate::identity::{AgentId, SignatureBytes};
use crate::ledger::HashDigest;
use crate::mobility::{NodeId, Platoon, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    NoCommit,
    NoReveal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimEvent {
    Note {
        text: String,
    },
    AuctionCommit {
        session: u64,
        role: Role,
        bidder: AgentId,
        commitment: HashDigest,
    },
    AuctionReveal {
        session: u64,
        bidder: AgentId,
        price: Price,
        nonce: Nonce,
    },
    AuctionExcluded {
        session: u64,
        bidder: AgentId,
        reason: ExclusionReason,
    },
    AuctionOutcome {
        session: u64,
        outcome: AuctionOutcome,
    },
    ContractCreated {
        contract: ContractId,
        terms: ContractTerms,
    },
    ContractSigned {
        contract: ContractId,
        signer: AgentId,
        signature: SignatureBytes,
    },
    StageTransition {
        contract: ContractId,
        from: Stage,
        to: Stage,
        reason: Option<TransitionReason>,
    },
    EscrowLocked {
        contract: ContractId,
        payer: AgentId,
        amount: u64,
    },
    ViolationRaised {
        violation: Violation,
    },
    /// Signed by the conflict-resolution escrow.
    Mediated {
        contract: ContractId,
        severity: Severity,
        penalty: u64,
        decision: Stage,
    },
    Payment {
        contract: ContractId,
        from: Account,
        to: Account,
        amount: u64,
        kind: PaymentKind,
    },
    Charged {
        contract: ContractId,
        energy_wh: u64,
    },
    Departed {
        ev: AgentId,
        from: NodeId,
        to: NodeId,
    },
    Arrived {
        ev: AgentId,
        at: NodeId,
    },
    Stranded {
        ev: AgentId,
        position: Position,
    },
    PlatoonFormed {
        platoon: Platoon,
    },
}

impl SimEvent {
    pub fn encode(&self) -> Vec<u8> {
        canonical(self)
    }

    pub fn decode(bytes: &[u8]) -> Option<SimEvent> {
        bincode::deserialize(bytes).ok()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SimEvent::Note { .. } => "note",
            SimEvent::AuctionCommit { .. } => "auction_commit",
            SimEvent::AuctionReveal { .. } => "auction_reveal",
            SimEvent::AuctionExcluded { .. } => "auction_excluded",
            SimEvent::AuctionOutcome { .. } => "auction_outcome",
            SimEvent::ContractCreated { .. } => "contract_created",
            SimEvent::ContractSigned { .. } => "contract_signed",
            SimEvent::StageTransition { .. } => "stage_transition",
            SimEvent::EscrowLocked { .. } => "escrow_locked",
            SimEvent::ViolationRaised { .. } => "violation",
            SimEvent::Mediated { .. } => "mediation",
            SimEvent::Payment { .. } => "payment",
            SimEvent::Charged { .. } => "charged",
            SimEvent::Departed { .. } => "departed",
            SimEvent::Arrived { .. } => "arrived",
            SimEvent::Stranded { .. } => "stranded",
            SimEvent::PlatoonFormed { .. } => "platoon_formed",
        }
    }

    /// Contract this event belongs to, if any.
    pub fn contract(&self) -> Option<ContractId> {
        match self {
            SimEvent::ContractCreated { contract, .. }
            | SimEvent::ContractSigned { contract, .. }
            | SimEvent::StageTransition { contract, .. }
            | SimEvent::EscrowLocked { contract, .. }
            | SimEvent::Mediated { contract, .. }
            | SimEvent::Payment { contract, .. }
            | SimEvent::Charged { contract, .. } => Some(*contract),
            SimEvent::ViolationRaised { violation } => Some(violation.contract),
            _ => None,
        }
    }
}
