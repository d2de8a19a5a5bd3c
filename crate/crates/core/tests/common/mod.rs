//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use m2x_core::auction::Price;
use m2x_core::events::SimEvent;
use m2x_core::identity::{AgentId, AgentIdentity, KeyRegistry};
use m2x_core::ledger::Ledger;
use m2x_core::mobility::{CityGraph, Metric, NodeId};
use m2x_core::sim::Scenario;

/// Rank of each entry: how many entries beat it (higher price, or equal
/// price and smaller id).
fn rank_of(entries: &[(AgentId, Price)]) -> Vec<(usize, AgentId, Price)> {
    let mut out: Vec<_> = entries
        .iter()
        .map(|(id, p)| {
            let ahead = entries
                .iter()
                .filter(|(oid, op)| op > p || (op == p && oid < id))
                .count();
            (ahead, id.clone(), *p)
        })
        .collect();
    out.sort_by_key(|e| e.0);
    out
}

/// Rank pairing: rank k trades at max(reserve_k, bid_{k+1}) while bid_k
/// covers it; the first failing rank ends the market.
pub fn d2_oracle(buyers: &[(AgentId, Price)], sellers: &[(AgentId, Price)]) -> Vec<(AgentId, AgentId, u32)> {
    let b = rank_of(buyers);
    let s = rank_of(sellers);
    let mut out = Vec::new();
    for k in 0..b.len().min(s.len()) {
        let next = b.get(k + 1).map_or(0, |e| e.2 .0);
        let price = s[k].2 .0.max(next);
        if b[k].2 .0 < price {
            break;
        }
        out.push((b[k].1.clone(), s[k].1.clone(), price));
    }
    out
}

pub fn ids(prefix: &str, prices: &[u32]) -> Vec<(AgentId, Price)> {
    prices
        .iter()
        .enumerate()
        .map(|(i, p)| (AgentId::new(format!("{prefix}{i}")), Price(*p)))
        .collect()
}

/// Cheapest simple path by enumerating all of them.
pub fn brute_shortest(city: &CityGraph, from: &NodeId, to: &NodeId, metric: Metric) -> Option<u64> {
    let mut adj: BTreeMap<&NodeId, Vec<(&NodeId, u64)>> = BTreeMap::new();
    for e in city.edges() {
        let w = match metric {
            Metric::Meters => e.meters as u64,
            Metric::Minutes => e.minutes as u64,
        };
        adj.entry(&e.from).or_default().push((&e.to, w));
        adj.entry(&e.to).or_default().push((&e.from, w));
    }
    fn go<'a>(
        at: &'a NodeId,
        to: &NodeId,
        cost: u64,
        seen: &mut Vec<&'a NodeId>,
        adj: &BTreeMap<&'a NodeId, Vec<(&'a NodeId, u64)>>,
        best: &mut Option<u64>,
    ) {
        if at == to {
            *best = Some(best.map_or(cost, |b| b.min(cost)));
            return;
        }
        for (next, w) in adj.get(at).into_iter().flatten() {
            if !seen.contains(next) {
                seen.push(next);
                go(next, to, cost + w, seen, adj, best);
                seen.pop();
            }
        }
    }
    let mut best = None;
    go(from, to, 0, &mut vec![from], &adj, &mut best);
    best
}

/// Ledger of `n` single-note blocks from two agents.
pub fn note_chain(n: u64) -> Ledger {
    let a = AgentIdentity::derive("alice", 1);
    let b = AgentIdentity::derive("bob", 1);
    let mut reg = KeyRegistry::new();
    reg.register(&a);
    reg.register(&b);
    let mut l = Ledger::new(reg);
    for i in 0..n {
        let who = if i % 2 == 0 { &a } else { &b };
        let tx = l
            .record_event(&SimEvent::Note { text: format!("note {i}") }, who, i)
            .unwrap();
        l.append_block(vec![tx]).unwrap();
    }
    l
}

pub fn alice() -> Scenario {
    serde_json::from_str(include_str!("../../../../scenarios/alice.json")).unwrap()
}
