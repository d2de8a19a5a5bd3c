use serde::{Deserialize, Serialize};

use super::{
    Account, Accounts, ChargingContract, ContractEntry, ContractError, ContractId, ContractTerms, LocalCopy,
    Obligation, ObligationMonitor, PaymentKind, Sensor, Severity, Stage, Termination, TransitionReason, Violation,
    transition_allowed,
};
use crate::auction::AuctionOutcome;
use crate::events::SimEvent;
use crate::identity::{AgentId, AgentIdentity};
use crate::ledger::Recorder;
use crate::units::{energy_cost_cents, energy_per_tick};

/// Pre-configured clauses merged into every contract built from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractTemplate {
    pub name: String,
    /// Cents debited per minor violation.
    pub penalty: u64,
    /// Shortfall, in percent of the promised value, still treated as minor.
    pub minor_percent: u8,
}

impl Default for ContractTemplate {
    fn default() -> Self {
        ContractTemplate {
            name: "charging".into(),
            penalty: 50,
            minor_percent: 10,
        }
    }
}

/// Signing identities of a contract's principals and the mediation escrow.
#[derive(Debug, Clone, Copy)]
pub struct Parties<'a> {
    pub ev: &'a AgentIdentity,
    pub station: &'a AgentIdentity,
    pub escrow: &'a AgentIdentity,
}

impl Parties<'_> {
    fn check(&self, terms: &ContractTerms) -> Result<(), ContractError> {
        if self.ev.id() != &terms.ev || self.station.id() != &terms.station {
            return Err(ContractError::PartyMismatch);
        }
        Ok(())
    }
}

/// Whether each party's endpoint answered the liveness ping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Liveness {
    pub ev: bool,
    pub station: bool,
}

/// One tick of sensor input for an enacted contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorReadings {
    /// Power the station actually supplied, in watts.
    pub power_w: u32,
    /// GPS reports the EV at the station.
    pub ev_present: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnactStatus {
    Continue,
    Completed,
    Mediation(Violation),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickReport {
    pub delivered_wh: u64,
    pub status: EnactStatus,
}

fn log(c: &mut ChargingContract, rec: &mut Recorder<'_>, author: &AgentIdentity, event: SimEvent) -> Result<(), ContractError> {
    rec.record(author, event.clone())?;
    c.event_log.push(ContractEntry {
        tick: rec.tick(),
        event,
    });
    Ok(())
}

fn transition(
    c: &mut ChargingContract,
    to: Stage,
    reason: Option<TransitionReason>,
    author: &AgentIdentity,
    rec: &mut Recorder<'_>,
) -> Result<(), ContractError> {
    let from = c.stage;
    if !transition_allowed(from, to) {
        return Err(ContractError::WrongStage { stage: from, op: to.name() });
    }
    log(
        c,
        rec,
        author,
        SimEvent::StageTransition {
            contract: c.id,
            from,
            to,
            reason,
        },
    )?;
    c.stage = to;
    Ok(())
}

fn expect_stage(c: &ChargingContract, stage: Stage, op: &'static str) -> Result<(), ContractError> {
    if c.stage.is_terminated() && op == "rollback" {
        return Err(ContractError::AlreadyTerminated);
    }
    if c.stage != stage {
        return Err(ContractError::WrongStage { stage: c.stage, op });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn pay(
    c: &mut ChargingContract,
    accounts: &mut Accounts,
    from: Account,
    to: Account,
    amount: u64,
    kind: PaymentKind,
    author: &AgentIdentity,
    rec: &mut Recorder<'_>,
) -> Result<(), ContractError> {
    if amount == 0 {
        return Ok(());
    }
    accounts.transfer(&from, &to, amount)?;
    if from == Account::Escrow {
        c.escrowed -= amount;
    }
    log(
        c,
        rec,
        author,
        SimEvent::Payment {
            contract: c.id,
            from,
            to,
            amount,
            kind,
        },
    )
}

/// Pays the station `amount` out of escrow and returns the rest to the EV.
fn release(
    c: &mut ChargingContract,
    accounts: &mut Accounts,
    amount: u64,
    kind: PaymentKind,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<(), ContractError> {
    let amount = amount.min(c.escrowed);
    let station = Account::Agent(c.terms.station_account().clone());
    pay(c, accounts, Account::Escrow, station, amount, kind, parties.escrow, rec)?;
    refund(c, accounts, parties, rec)
}

fn refund(c: &mut ChargingContract, accounts: &mut Accounts, parties: &Parties<'_>, rec: &mut Recorder<'_>) -> Result<(), ContractError> {
    let rest = c.escrowed;
    let ev = Account::Agent(c.terms.ev.clone());
    pay(c, accounts, Account::Escrow, ev, rest, PaymentKind::Refund, parties.escrow, rec)
}

/// Builds a contract in Initialization from a negotiated draft. The
/// template's penalty replaces the draft's.
pub fn create_contract(
    id: ContractId,
    template: &ContractTemplate,
    mut draft: ContractTerms,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<ChargingContract, ContractError> {
    parties.check(&draft)?;
    for who in [&draft.ev, &draft.station] {
        if !rec.registry().contains(who) {
            return Err(ContractError::UnknownAgent(who.clone()));
        }
    }
    draft.penalty = template.penalty;
    draft.validate().map_err(ContractError::InvalidTerms)?;
    let mut c = ChargingContract {
        id,
        terms: draft,
        stage: Stage::Initialization,
        signatures: Vec::new(),
        local_copies: Vec::new(),
        monitors: Vec::new(),
        event_log: Vec::new(),
        minor_percent: template.minor_percent,
        delivered_wh: 0,
        escrowed: 0,
        penalties_paid: 0,
    };
    let event = SimEvent::ContractCreated {
        contract: id,
        terms: c.terms.clone(),
    };
    log(&mut c, rec, parties.station, event)?;
    Ok(c)
}

pub fn start_negotiation(c: &mut ChargingContract, parties: &Parties<'_>, rec: &mut Recorder<'_>) -> Result<(), ContractError> {
    parties.check(&c.terms)?;
    expect_stage(c, Stage::Initialization, "start_negotiation")?;
    transition(c, Stage::Negotiation, None, parties.station, rec)
}

/// Applies the auction result. A match for this EV and station fixes the
/// price, both parties sign the terms and the contract moves to
/// Preparation; anything else rolls it back.
pub fn negotiate(
    c: &mut ChargingContract,
    outcome: &AuctionOutcome,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<Stage, ContractError> {
    parties.check(&c.terms)?;
    expect_stage(c, Stage::Negotiation, "negotiate")?;
    let Some(m) = outcome.match_for(&c.terms.ev, &c.terms.station) else {
        transition(c, Stage::Rollback, Some(TransitionReason::NoAgreement), parties.station, rec)?;
        return Ok(c.stage);
    };
    c.terms.price = m.clearing_price;
    let msg = c.terms.encode();
    for signer in [parties.ev, parties.station] {
        let signature = signer.sign(&msg);
        c.signatures.push((signer.id().clone(), signature));
        let event = SimEvent::ContractSigned {
            contract: c.id,
            signer: signer.id().clone(),
            signature,
        };
        log(c, rec, signer, event)?;
    }
    transition(c, Stage::Preparation, None, parties.station, rec)?;
    Ok(c.stage)
}

fn monitors_for(c: &ChargingContract, escrow_amount: u64) -> Vec<ObligationMonitor> {
    let t = &c.terms;
    Obligation::ALL
        .iter()
        .map(|&obligation| {
            let (sensor, threshold) = match obligation {
                Obligation::DeliverEnergy => (Sensor::EnergyMeter, t.expected_energy),
                Obligation::MaintainSpeed => (Sensor::PowerMeter, t.charging_speed as u64),
                Obligation::EvPresent => (Sensor::Gps, 1),
                Obligation::PayOnCompletion => (Sensor::PaymentEndpoint, escrow_amount),
            };
            ObligationMonitor {
                obligation,
                responsible: if obligation.on_station() { t.station.clone() } else { t.ev.clone() },
                sensor,
                threshold,
                tolerance: 0,
            }
        })
        .collect()
}

/// Cents the EV must lock before enactment: the full energy price plus the fixed fee.
pub(crate) fn escrow_requirement(terms: &ContractTerms) -> u64 {
    energy_cost_cents(terms.price.0, terms.expected_energy) + terms.fixed_fee
}

/// Distributes local copies, arms the monitors, escrows the EV's payment and
/// pings both endpoints. Any failure moves the contract to Rollback.
pub fn prepare(
    c: &mut ChargingContract,
    accounts: &mut Accounts,
    liveness: Liveness,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<Stage, ContractError> {
    parties.check(&c.terms)?;
    expect_stage(c, Stage::Preparation, "prepare")?;
    if !c.signatures_valid(rec.registry()) {
        transition(c, Stage::Rollback, Some(TransitionReason::MissingSignature), parties.station, rec)?;
        return Ok(c.stage);
    }
    c.local_copies = [&c.terms.ev, &c.terms.station]
        .into_iter()
        .map(|party| LocalCopy {
            party: party.clone(),
            terms: c.terms.clone(),
            obligations: Obligation::ALL
                .into_iter()
                .filter(|o| o.on_station() == (party == &c.terms.station))
                .collect(),
        })
        .collect();
    let amount = escrow_requirement(&c.terms);
    c.monitors = monitors_for(c, amount);

    if accounts.balance(&c.terms.ev) < amount {
        transition(c, Stage::Rollback, Some(TransitionReason::InsufficientFunds), parties.station, rec)?;
        return Ok(c.stage);
    }
    accounts.transfer(&Account::Agent(c.terms.ev.clone()), &Account::Escrow, amount)?;
    c.escrowed = amount;
    let event = SimEvent::EscrowLocked {
        contract: c.id,
        payer: c.terms.ev.clone(),
        amount,
    };
    log(c, rec, parties.ev, event)?;

    if !(liveness.ev && liveness.station) {
        transition(c, Stage::Rollback, Some(TransitionReason::LivenessFailure), parties.station, rec)?;
        return Ok(c.stage);
    }
    transition(c, Stage::Enactment, None, parties.station, rec)?;
    Ok(c.stage)
}

fn raise(
    c: &mut ChargingContract,
    obligation: Obligation,
    observed: u64,
    severity: Severity,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<Violation, ContractError> {
    let monitor = c
        .monitors
        .iter()
        .find(|m| m.obligation == obligation)
        .expect("monitors armed during preparation");
    let violation = Violation {
        contract: c.id,
        obligation,
        responsible: monitor.responsible.clone(),
        observed,
        threshold: monitor.threshold,
        tick: rec.tick(),
        severity,
    };
    let event = SimEvent::ViolationRaised {
        violation: violation.clone(),
    };
    log(c, rec, parties.escrow, event)?;
    let reason = match severity {
        Severity::Minor => TransitionReason::MinorViolation,
        Severity::Severe => TransitionReason::SevereViolation,
    };
    transition(c, Stage::Mediation, Some(reason), parties.escrow, rec)?;
    Ok(violation)
}

fn evaluate(c: &ChargingContract, obligation: Obligation, observed: u64) -> Option<Severity> {
    c.monitors
        .iter()
        .find(|m| m.obligation == obligation)
        .and_then(|m| m.evaluate(observed, c.minor_percent))
}

/// Charges for one tick. Delivery is the supplied power over one tick,
/// capped by what is still owed and by `headroom_wh` in the EV battery.
///
/// The contract completes when the expected energy is reached or the
/// battery is full; payment is then released from escrow. An absent EV, a
/// speed shortfall, or an unmet energy target on the last tick of the
/// timeframe raises a violation and moves the contract to Mediation.
pub fn enact_tick(
    c: &mut ChargingContract,
    tick: u64,
    readings: SensorReadings,
    headroom_wh: u64,
    accounts: &mut Accounts,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<TickReport, ContractError> {
    parties.check(&c.terms)?;
    expect_stage(c, Stage::Enactment, "enact_tick")?;
    let (start, end) = c.terms.timeframe;
    if tick < start || tick >= end {
        return Err(ContractError::TickOutOfWindow { tick, start, end });
    }

    if let Some(severity) = evaluate(c, Obligation::EvPresent, readings.ev_present as u64) {
        let v = raise(c, Obligation::EvPresent, readings.ev_present as u64, severity, parties, rec)?;
        return Ok(TickReport {
            delivered_wh: 0,
            status: EnactStatus::Mediation(v),
        });
    }

    let owed = c.terms.expected_energy - c.delivered_wh;
    let delivered = energy_per_tick(readings.power_w).min(owed).min(headroom_wh);
    c.delivered_wh += delivered;
    if delivered > 0 {
        let event = SimEvent::Charged {
            contract: c.id,
            energy_wh: delivered,
        };
        log(c, rec, parties.station, event)?;
    }

    if c.delivered_wh >= c.terms.expected_energy || delivered == headroom_wh {
        let due = energy_cost_cents(c.terms.price.0, c.delivered_wh) + c.terms.fixed_fee;
        release(c, accounts, due, PaymentKind::Settlement, parties, rec)?;
        c.monitors.clear();
        transition(c, Stage::Terminated(Termination::Completed), None, parties.station, rec)?;
        return Ok(TickReport {
            delivered_wh: delivered,
            status: EnactStatus::Completed,
        });
    }

    let violation = if tick + 1 == end {
        // nothing left to remedy on the last tick
        Some((Obligation::DeliverEnergy, c.delivered_wh, Severity::Severe))
    } else {
        evaluate(c, Obligation::MaintainSpeed, readings.power_w as u64)
            .map(|s| (Obligation::MaintainSpeed, readings.power_w as u64, s))
    };
    let status = match violation {
        Some((obligation, observed, severity)) => {
            EnactStatus::Mediation(raise(c, obligation, observed, severity, parties, rec)?)
        }
        None => EnactStatus::Continue,
    };
    Ok(TickReport {
        delivered_wh: delivered,
        status,
    })
}

/// Escrow-supervised resolution of a violation.
///
/// A minor violation costs the responsible party the contract penalty
/// (capped at its balance), credited to the counterparty, and enactment
/// continues. A severe one rolls the contract back if nothing was
/// delivered yet; otherwise it fails with payment for the delivered energy.
pub fn mediate(
    c: &mut ChargingContract,
    violation: &Violation,
    accounts: &mut Accounts,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<Stage, ContractError> {
    parties.check(&c.terms)?;
    expect_stage(c, Stage::Mediation, "mediate")?;
    match violation.severity {
        Severity::Minor => {
            let other = c.terms.counterparty(&violation.responsible).ok_or(ContractError::PartyMismatch)?;
            let account = |id: &AgentId| if id == &c.terms.station { c.terms.station_account().clone() } else { id.clone() };
            let (violator, other) = (account(&violation.responsible), account(other));
            let penalty = c.terms.penalty.min(accounts.balance(&violator));
            let event = SimEvent::Mediated {
                contract: c.id,
                severity: Severity::Minor,
                penalty,
                decision: Stage::Enactment,
            };
            log(c, rec, parties.escrow, event)?;
            pay(
                c,
                accounts,
                Account::Agent(violator),
                Account::Agent(other),
                penalty,
                PaymentKind::Penalty,
                parties.escrow,
                rec,
            )?;
            c.penalties_paid += penalty;
            transition(c, Stage::Enactment, Some(TransitionReason::MinorViolation), parties.escrow, rec)?;
        }
        Severity::Severe => {
            let decision = if c.delivered_wh == 0 {
                Stage::Rollback
            } else {
                Stage::Terminated(Termination::Failed)
            };
            let event = SimEvent::Mediated {
                contract: c.id,
                severity: Severity::Severe,
                penalty: 0,
                decision,
            };
            log(c, rec, parties.escrow, event)?;
            if decision != Stage::Rollback {
                let due = energy_cost_cents(c.terms.price.0, c.delivered_wh);
                release(c, accounts, due, PaymentKind::ProRata, parties, rec)?;
                c.monitors.clear();
            }
            transition(c, decision, Some(TransitionReason::SevereViolation), parties.escrow, rec)?;
        }
    }
    Ok(c.stage)
}

/// Refunds any escrow and terminates the contract as failed. Allowed from
/// Negotiation, Preparation, Mediation and Rollback.
pub fn rollback(
    c: &mut ChargingContract,
    reason: TransitionReason,
    accounts: &mut Accounts,
    parties: &Parties<'_>,
    rec: &mut Recorder<'_>,
) -> Result<(), ContractError> {
    parties.check(&c.terms)?;
    if c.stage.is_terminated() {
        return Err(ContractError::AlreadyTerminated);
    }
    if c.stage != Stage::Rollback {
        if !transition_allowed(c.stage, Stage::Rollback) {
            return Err(ContractError::WrongStage { stage: c.stage, op: "rollback" });
        }
        let author = if c.stage == Stage::Mediation { parties.escrow } else { parties.station };
        transition(c, Stage::Rollback, Some(reason), author, rec)?;
    }
    refund(c, accounts, parties, rec)?;
    c.monitors.clear();
    transition(c, Stage::Terminated(Termination::Failed), Some(reason), parties.station, rec)
}
