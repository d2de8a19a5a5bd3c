//! Sealed-bid, single-round Vickrey auctions.
//!
//! Bids are sealed with a hash commitment signed by the bidder and opened
//! in a second phase by revealing price and nonce. Settlement follows the
//! second-price rule: in the one-to-one case the buyer pays the seller's
//! reserve; with several buyers and sellers, ranks are paired and each pair
//! clears at the larger of the seller's reserve and the next-lower buyer bid.

mod session;
mod settle;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{hex_bytes, put_lp};
use crate::identity::{AgentId, AgentIdentity, KeyRegistry, SignatureBytes};
use crate::ledger::{HashDigest, LedgerError};

pub use session::{run_auction_session, AuctionSession, Participant, Phase, SessionReport, SessionTranscript};
pub use settle::{settle_many, settle_one_to_one, AuctionOutcome, Match, Settlement};

/// Price in euro-cents per kWh (€0.33 is `Price(33)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Price(pub u32);

impl Price {
    pub fn cents(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}c/kWh", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Buyer,
    Seller,
}

impl Role {
    fn tag(self) -> &'static [u8] {
        match self {
            Role::Buyer => b"buyer",
            Role::Seller => b"seller",
        }
    }
}

pub const NONCE_LEN: usize = 16;

hex_bytes!(
    /// Blinding nonce of a sealed bid.
    Nonce,
    16
);

#[derive(Debug, Error)]
pub enum AuctionError {
    #[error("nonce must be {NONCE_LEN} bytes, got {0}")]
    BadNonceLength(usize),
    #[error("revealed bid of {0} does not match its commitment")]
    RevealMismatch(AgentId),
    #[error("bid signature of {0} does not verify")]
    InvalidSignature(AgentId),
    #[error("reveal by {reveal} offered for the sealed bid of {sealed}")]
    BidderMismatch { sealed: AgentId, reveal: AgentId },
    #[error("{action} not allowed in the {phase:?} phase")]
    PhaseViolation { phase: Phase, action: &'static str },
    #[error("{0} is not a participant of this session in that role")]
    UnknownParticipant(AgentId),
    #[error("{0} already submitted")]
    Duplicate(AgentId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Signed commitment to `(role, bidder, price, nonce)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBid {
    pub role: Role,
    pub bidder: AgentId,
    pub commitment: HashDigest,
    pub signature: SignatureBytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidReveal {
    pub bidder: AgentId,
    pub price: Price,
    pub nonce: Nonce,
}

/// `SHA-256(lp(role) | lp(bidder) | price:u32 BE | nonce)`.
pub fn commitment(role: Role, bidder: &AgentId, price: Price, nonce: &Nonce) -> HashDigest {
    let mut buf = Vec::with_capacity(64);
    put_lp(&mut buf, role.tag());
    put_lp(&mut buf, bidder.as_str().as_bytes());
    buf.extend_from_slice(&price.0.to_be_bytes());
    buf.extend_from_slice(&nonce.0);
    HashDigest(Sha256::digest(&buf).into())
}

pub fn commit_bid(role: Role, bidder: &AgentIdentity, price: Price, nonce: &[u8]) -> Result<SealedBid, AuctionError> {
    let nonce = Nonce(nonce.try_into().map_err(|_| AuctionError::BadNonceLength(nonce.len()))?);
    let commitment = commitment(role, bidder.id(), price, &nonce);
    Ok(SealedBid {
        role,
        bidder: bidder.id().clone(),
        signature: bidder.sign(&commitment.0),
        commitment,
    })
}

/// Opens a sealed bid. The commitment is checked before the signature, so a
/// damaged commitment reports [`AuctionError::RevealMismatch`].
pub fn open_bid(sealed: &SealedBid, reveal: &BidReveal, registry: &KeyRegistry) -> Result<Price, AuctionError> {
    if sealed.bidder != reveal.bidder {
        return Err(AuctionError::BidderMismatch {
            sealed: sealed.bidder.clone(),
            reveal: reveal.bidder.clone(),
        });
    }
    if commitment(sealed.role, &reveal.bidder, reveal.price, &reveal.nonce) != sealed.commitment {
        return Err(AuctionError::RevealMismatch(reveal.bidder.clone()));
    }
    if !registry.verify(&sealed.bidder, &sealed.commitment.0, &sealed.signature.0) {
        return Err(AuctionError::InvalidSignature(sealed.bidder.clone()));
    }
    Ok(reveal.price)
}
