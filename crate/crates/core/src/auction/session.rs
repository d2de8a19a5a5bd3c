use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{commit_bid, open_bid, settle_many, AuctionError, AuctionOutcome, BidReveal, Nonce, Price, Role, SealedBid, NONCE_LEN};
use crate::events::{ExclusionReason, SimEvent};
use crate::identity::{AgentId, AgentIdentity, KeyRegistry};
use crate::ledger::Recorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Commit,
    Reveal,
    Settled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub bidder: AgentId,
    pub role: Role,
    pub commitment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealEntry {
    pub bidder: AgentId,
    pub price: Price,
    pub nonce: String,
}

/// JSON-exportable record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session: u64,
    pub phase_log: Vec<String>,
    pub commitments: Vec<CommitEntry>,
    pub reveals: Vec<RevealEntry>,
    pub excluded: Vec<AgentId>,
    pub outcome: Option<AuctionOutcome>,
}

/// Two-phase commit/reveal protocol object for exactly one auction round.
///
/// The commit phase ends once every participant has committed, or when
/// [`AuctionSession::close_commits`] is called; missing committers are
/// excluded. Reveals are refused until then. At settlement, anyone who
/// committed but did not reveal is excluded as well.
#[derive(Debug)]
pub struct AuctionSession {
    id: u64,
    phase: Phase,
    roles: BTreeMap<AgentId, Role>,
    commits: BTreeMap<AgentId, SealedBid>,
    revealed: BTreeMap<AgentId, Price>,
    excluded: BTreeSet<AgentId>,
    transcript: SessionTranscript,
}

impl AuctionSession {
    pub fn new(
        id: u64,
        buyers: impl IntoIterator<Item = AgentId>,
        sellers: impl IntoIterator<Item = AgentId>,
    ) -> Self {
        let mut roles = BTreeMap::new();
        roles.extend(buyers.into_iter().map(|b| (b, Role::Buyer)));
        roles.extend(sellers.into_iter().map(|s| (s, Role::Seller)));
        AuctionSession {
            id,
            phase: Phase::Commit,
            roles,
            commits: BTreeMap::new(),
            revealed: BTreeMap::new(),
            excluded: BTreeSet::new(),
            transcript: SessionTranscript {
                session: id,
                phase_log: vec!["commit".into()],
                ..Default::default()
            },
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn transcript(&self) -> &SessionTranscript {
        &self.transcript
    }

    pub fn submit_commit(&mut self, sealed: SealedBid, registry: &KeyRegistry) -> Result<SimEvent, AuctionError> {
        if self.phase != Phase::Commit {
            return Err(AuctionError::PhaseViolation {
                phase: self.phase,
                action: "commit",
            });
        }
        if self.roles.get(&sealed.bidder) != Some(&sealed.role) {
            return Err(AuctionError::UnknownParticipant(sealed.bidder.clone()));
        }
        if self.commits.contains_key(&sealed.bidder) {
            return Err(AuctionError::Duplicate(sealed.bidder.clone()));
        }
        if !registry.verify(&sealed.bidder, &sealed.commitment.0, &sealed.signature.0) {
            return Err(AuctionError::InvalidSignature(sealed.bidder.clone()));
        }
        let event = SimEvent::AuctionCommit {
            session: self.id,
            role: sealed.role,
            bidder: sealed.bidder.clone(),
            commitment: sealed.commitment,
        };
        self.transcript.commitments.push(CommitEntry {
            bidder: sealed.bidder.clone(),
            role: sealed.role,
            commitment: sealed.commitment.to_hex(),
        });
        self.commits.insert(sealed.bidder.clone(), sealed);
        if self.commits.len() == self.roles.len() {
            self.enter_reveal();
        }
        Ok(event)
    }

    fn enter_reveal(&mut self) {
        self.phase = Phase::Reveal;
        self.transcript.phase_log.push("reveal".into());
    }

    /// Ends the commit phase. Returns exclusion events for participants that
    /// never committed.
    pub fn close_commits(&mut self) -> Vec<SimEvent> {
        if self.phase != Phase::Commit {
            return Vec::new();
        }
        let missing: Vec<AgentId> = self
            .roles
            .keys()
            .filter(|id| !self.commits.contains_key(*id))
            .cloned()
            .collect();
        self.enter_reveal();
        missing
            .into_iter()
            .map(|id| self.exclude(id, ExclusionReason::NoCommit))
            .collect()
    }

    fn exclude(&mut self, bidder: AgentId, reason: ExclusionReason) -> SimEvent {
        self.excluded.insert(bidder.clone());
        self.transcript.excluded.push(bidder.clone());
        SimEvent::AuctionExcluded {
            session: self.id,
            bidder,
            reason,
        }
    }

    pub fn submit_reveal(&mut self, reveal: BidReveal, registry: &KeyRegistry) -> Result<SimEvent, AuctionError> {
        if self.phase != Phase::Reveal {
            return Err(AuctionError::PhaseViolation {
                phase: self.phase,
                action: "reveal",
            });
        }
        let Some(sealed) = self.commits.get(&reveal.bidder) else {
            return Err(AuctionError::UnknownParticipant(reveal.bidder.clone()));
        };
        if self.revealed.contains_key(&reveal.bidder) {
            return Err(AuctionError::Duplicate(reveal.bidder.clone()));
        }
        let price = open_bid(sealed, &reveal, registry)?;
        self.revealed.insert(reveal.bidder.clone(), price);
        self.transcript.reveals.push(RevealEntry {
            bidder: reveal.bidder.clone(),
            price,
            nonce: reveal.nonce.to_hex(),
        });
        Ok(SimEvent::AuctionReveal {
            session: self.id,
            bidder: reveal.bidder,
            price,
            nonce: reveal.nonce,
        })
    }

    /// Closes the reveal phase and settles. Returns the outcome plus the
    /// exclusion events for committed participants that did not reveal,
    /// followed by the outcome event.
    pub fn settle(&mut self) -> Result<(AuctionOutcome, Vec<SimEvent>), AuctionError> {
        if self.phase != Phase::Reveal {
            return Err(AuctionError::PhaseViolation {
                phase: self.phase,
                action: "settle",
            });
        }
        let silent: Vec<AgentId> = self
            .commits
            .keys()
            .filter(|id| !self.revealed.contains_key(*id))
            .cloned()
            .collect();
        let mut events: Vec<SimEvent> = silent
            .into_iter()
            .map(|id| self.exclude(id, ExclusionReason::NoReveal))
            .collect();
        let side = |role: Role| -> Vec<(AgentId, Price)> {
            self.revealed
                .iter()
                .filter(|(id, _)| self.roles[*id] == role)
                .map(|(id, p)| (id.clone(), *p))
                .collect()
        };
        let outcome = settle_many(&side(Role::Buyer), &side(Role::Seller));
        self.phase = Phase::Settled;
        self.transcript.phase_log.push("settled".into());
        self.transcript.outcome = Some(outcome.clone());
        events.push(SimEvent::AuctionOutcome {
            session: self.id,
            outcome: outcome.clone(),
        });
        Ok((outcome, events))
    }
}

/// One side of a session as driven by [`run_auction_session`].
#[derive(Debug, Clone, Copy)]
pub struct Participant<'a> {
    pub identity: &'a AgentIdentity,
    pub role: Role,
    pub price: Price,
    /// `false` simulates a participant that commits and then goes silent.
    pub reveals: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub outcome: AuctionOutcome,
    pub transcript: SessionTranscript,
}

/// Runs a complete single-round session: every participant commits, then
/// every willing participant reveals, then the host settles. Commit and
/// reveal events are signed by the bidders, exclusions and the outcome by
/// `host`.
pub fn run_auction_session(
    session_id: u64,
    participants: &[Participant<'_>],
    host: &AgentIdentity,
    recorder: &mut Recorder<'_>,
    rng: &mut dyn RngCore,
) -> Result<SessionReport, AuctionError> {
    let mut session = AuctionSession::new(
        session_id,
        participants.iter().filter(|p| p.role == Role::Buyer).map(|p| p.identity.id().clone()),
        participants.iter().filter(|p| p.role == Role::Seller).map(|p| p.identity.id().clone()),
    );
    let mut nonces = Vec::with_capacity(participants.len());
    for p in participants {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let sealed = commit_bid(p.role, p.identity, p.price, &nonce)?;
        let event = session.submit_commit(sealed, recorder.registry())?;
        recorder.record(p.identity, event)?;
        nonces.push(Nonce(nonce));
    }
    for event in session.close_commits() {
        recorder.record(host, event)?;
    }
    for (p, nonce) in participants.iter().zip(nonces) {
        if !p.reveals {
            continue;
        }
        let reveal = BidReveal {
            bidder: p.identity.id().clone(),
            price: p.price,
            nonce,
        };
        let event = session.submit_reveal(reveal, recorder.registry())?;
        recorder.record(p.identity, event)?;
    }
    let (outcome, events) = session.settle()?;
    for event in events {
        recorder.record(host, event)?;
    }
    Ok(SessionReport {
        outcome,
        transcript: session.transcript,
    })
}
