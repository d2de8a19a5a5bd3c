mod common;

use std::collections::BTreeMap;

use common::alice;
use m2x_core::contract::{transition_allowed, Stage};
use m2x_core::events::SimEvent;
use m2x_core::marketplace::PowerSource;
use m2x_core::sim::synth::{random_scenario, SynthOptions};
use m2x_core::sim::{run, run_with_seed};
use proptest::prelude::*;

fn check_run(seed: u64, opts: SynthOptions) -> Result<(), TestCaseError> {
    let s = random_scenario(seed, opts);
    let out = run(&s).unwrap();
    let m = &out.metrics;
    let registry = out.ledger.registry();

    prop_assert!(out.ledger.verify_chain().is_ok());
    prop_assert!(m.money_conserved(), "money: {:?}", m);
    prop_assert!(m.energy_conserved(), "energy: {:?}", m);
    prop_assert!(m.payments_balance());

    let ledger_payloads: Vec<(u64, Vec<u8>)> = out
        .ledger
        .transactions()
        .map(|tx| (tx.timestamp, tx.payload.clone()))
        .collect();
    for c in &out.contracts {
        prop_assert!(c.stage.is_terminated());
        for (from, to) in c.transitions() {
            prop_assert!(transition_allowed(from, to), "{} -> {}", from, to);
        }
        if c.transitions().any(|(_, to)| to == Stage::Enactment) {
            prop_assert_eq!(c.signatures.len(), 2);
            prop_assert!(c.signatures_valid(registry));
            prop_assert!(c.local_copies_agree());
        }
        for e in &c.event_log {
            let key = (e.tick, e.event.encode());
            prop_assert!(ledger_payloads.contains(&key), "missing {:?}", e.event);
        }
        prop_assert!(c.delivered_wh <= c.terms.expected_energy);
    }

    // Every EV that left home is back or stranded by the end of the window.
    for ev in &m.evs {
        prop_assert!(ev.home || ev.stranded, "{} still out", ev.id);
        prop_assert!(ev.final_soc_wh <= s.evs.iter().find(|e| e.id == ev.id).unwrap().battery.capacity_wh);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn random_runs_are_sound(seed in any::<u64>()) {
        check_run(seed, SynthOptions::default())?;
    }

    #[test]
    fn fault_free_runs_complete(seed in any::<u64>()) {
        let s = random_scenario(seed, SynthOptions { faults: false, ..SynthOptions::default() });
        let out = run(&s).unwrap();
        prop_assert_eq!(out.metrics.violations, 0);
        prop_assert_eq!(out.metrics.completed(), out.metrics.contracts);
        for ev in &out.metrics.evs {
            prop_assert!(!ev.stranded);
            prop_assert_eq!(ev.admitted, ev.charged_by_deadline);
        }
    }

    #[test]
    fn seeds_fully_determine_ledgers(seed in any::<u64>()) {
        let s = random_scenario(seed, SynthOptions::default());
        let a = run_with_seed(&s, seed ^ 1).unwrap();
        let b = run_with_seed(&s, seed ^ 1).unwrap();
        prop_assert_eq!(a.ledger.to_bytes(), b.ledger.to_bytes());
        prop_assert_eq!(a.metrics, b.metrics);
    }
}

#[test]
fn platoon_members_arrive_together() {
    let mut checked = 0;
    for seed in 0..300 {
        let s = random_scenario(seed, SynthOptions::default());
        let out = run(&s).unwrap();
        let mut pending: Vec<(u64, Vec<_>)> = Vec::new();
        let mut arrivals = BTreeMap::new();
        for tx in out.ledger.transactions() {
            match tx.event() {
                Some(SimEvent::PlatoonFormed { platoon }) => pending.push((tx.timestamp, platoon.members)),
                Some(SimEvent::Arrived { ev, .. }) => arrivals.entry(ev).or_insert_with(Vec::new).push(tx.timestamp),
                _ => {}
            }
        }
        for (formed, members) in pending {
            let ticks: Vec<Option<u64>> = members
                .iter()
                .map(|m| arrivals.get(m).and_then(|v| v.iter().copied().find(|t| *t >= formed)))
                .collect();
            assert!(ticks.windows(2).all(|w| w[0] == w[1]), "seed {seed}: {ticks:?}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn alice_prefers_renewables() {
    let s = alice();
    let out = run(&s).unwrap();
    let m = &out.metrics;
    assert_eq!(m.station("B").unwrap().contracts, 0);
    let c = &out.contracts[0];
    assert!(["C", "D"].contains(&c.terms.station.as_str()));
    assert_eq!(c.stage.name(), "completed");
    let ev = m.ev("alice-ev").unwrap();
    assert!(ev.home && ev.energy_received_wh >= s.evs[0].constraints.required_energy);
    // D is private: its owner collects.
    let bob = s.owners.iter().find(|o| o.id.as_str() == "bob").unwrap();
    assert!(m.final_balances[&bob.id] > bob.balance);
}

#[test]
fn alice_without_preferences_takes_coal() {
    let mut s = alice();
    s.evs[0].constraints.allowed_sources = [
        PowerSource::Solar,
        PowerSource::Wind,
        PowerSource::Coal,
        PowerSource::Nuclear,
        PowerSource::GridMix,
    ]
    .into();
    let out = run(&s).unwrap();
    assert_eq!(out.contracts.len(), 1);
    assert_eq!(out.contracts[0].terms.station.as_str(), "B");
    assert_eq!(out.metrics.station("B").unwrap().contracts, 1);
}

#[test]
fn one_station_ample_window() {
    let mut s = alice();
    s.stations.retain(|st| st.profile.id.as_str() == "C");
    s.owners.clear();
    let out = run(&s).unwrap();
    assert_eq!(out.metrics.completed(), 1);
    let ev = out.metrics.ev("alice-ev").unwrap();
    assert!(ev.home && ev.charged_by_deadline);
}

#[test]
fn nothing_to_buy_means_staying_home() {
    let mut s = alice();
    s.stations.clear();
    s.owners.clear();
    let out = run(&s).unwrap();
    assert_eq!(out.metrics.contracts, 0);
    let ev = out.metrics.ev("alice-ev").unwrap();
    assert_eq!(ev.distance_m, 0);
    assert!(!out.ledger.events().any(|e| matches!(e, SimEvent::Departed { .. })));
}
