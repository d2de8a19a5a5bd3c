mod common;

use common::brute_shortest;
use m2x_core::mobility::{
    advance_ev, form_platoons, AdvanceStatus, Battery, CityGraph, Edge, Leader, Metric, NodeId, PendingTraveler, Trip,
};
use proptest::prelude::*;

fn graph() -> impl Strategy<Value = CityGraph> {
    (2usize..=6).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 1u32..50, 1u32..10), 0..12).prop_map(move |raw| {
            let nodes: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("v{i}"))).collect();
            let edges = raw
                .into_iter()
                .filter(|(a, b, _, _)| a != b)
                .map(|(a, b, meters, minutes)| Edge {
                    from: nodes[a].clone(),
                    to: nodes[b].clone(),
                    meters,
                    minutes,
                })
                .collect();
            CityGraph::new(nodes, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn dijkstra_matches_enumeration(city in graph()) {
        let nodes: Vec<NodeId> = city.nodes().cloned().collect();
        for metric in [Metric::Meters, Metric::Minutes] {
            for a in &nodes {
                for b in &nodes {
                    let expect = brute_shortest(&city, a, b, metric);
                    match city.shortest_path(a, b, metric) {
                        Ok(r) => {
                            let cost = if metric == Metric::Meters { r.meters } else { r.minutes };
                            prop_assert_eq!(Some(cost), expect);
                            prop_assert_eq!(r.origin(), a);
                            prop_assert_eq!(r.destination(), b);
                            prop_assert_eq!(r.legs.len() + 1, r.nodes.len());
                            let m: u64 = r.legs.iter().map(|l| l.0 as u64).sum();
                            let t: u64 = r.legs.iter().map(|l| l.1 as u64).sum();
                            prop_assert_eq!((m, t), (r.meters, r.minutes));
                        }
                        Err(_) => prop_assert_eq!(expect, None),
                    }
                }
            }
        }
    }

    #[test]
    fn driving_keeps_soc_in_bounds_and_books_balanced(
        city in graph(),
        capacity in 1_000u64..80_000,
        soc_pct in 0u64..=100,
        consumption in 0.05f64..2.0,
        step in 1u64..4,
    ) {
        let nodes: Vec<NodeId> = city.nodes().cloned().collect();
        let Ok(route) = city.shortest_path(&nodes[0], nodes.last().unwrap(), Metric::Meters) else {
            return Ok(());
        };
        let mut battery = Battery::new(capacity, capacity * soc_pct / 100, consumption).unwrap();
        let start = battery.soc_wh;
        let mut trip = Trip::new(route);
        for _ in 0..500 {
            let status = advance_ev(&mut battery, &mut trip, step);
            prop_assert!(battery.soc_wh <= battery.capacity_wh);
            prop_assert_eq!(start - battery.soc_wh, trip.energy_used_wh);
            prop_assert!(trip.meters_done <= trip.route.meters);
            match status {
                AdvanceStatus::Moving => {}
                AdvanceStatus::Arrived => {
                    prop_assert_eq!(trip.energy_used_wh, battery.energy_for(trip.route.meters));
                    break;
                }
                AdvanceStatus::Stranded { .. } => {
                    prop_assert!(battery.energy_for(trip.route.meters) > start);
                    break;
                }
            }
        }
    }

    #[test]
    fn charging_never_overfills(capacity in 1u64..100_000, soc in 0u64..100_000, wh in 0u64..200_000) {
        let soc = soc.min(capacity);
        let mut b = Battery::new(capacity, soc, 0.15).unwrap();
        let stored = b.charge(wh);
        prop_assert_eq!(stored, wh.min(capacity - soc));
        prop_assert_eq!(b.soc_wh, soc + stored);
    }

    #[test]
    fn platoons_respect_size_and_leaders(
        travellers in prop::collection::vec((0u8..3, 0u8..3, any::<bool>()), 0..12),
        leaders in prop::collection::vec(any::<bool>(), 0..4),
        max in 1usize..5,
    ) {
        let pending: Vec<PendingTraveler> = travellers
            .iter()
            .enumerate()
            .map(|(i, (o, d, semi))| PendingTraveler {
                ev: format!("ev{i:02}").into(),
                origin: NodeId::new(format!("n{o}")),
                destination: NodeId::new(format!("n{d}")),
                semi_autonomous: *semi,
            })
            .collect();
        let leaders: Vec<Leader> = leaders
            .iter()
            .enumerate()
            .map(|(i, f)| Leader { id: format!("l{i}").into(), fully_autonomous: *f })
            .collect();
        let plan = form_platoons(&pending, &leaders, max);
        let mut seen = Vec::new();
        let mut used = Vec::new();
        for p in &plan.platoons {
            prop_assert!(!p.members.is_empty() && p.members.len() <= max);
            let l = leaders.iter().find(|l| l.id == p.leader).unwrap();
            prop_assert!(l.fully_autonomous);
            prop_assert!(!used.contains(&p.leader));
            used.push(p.leader.clone());
            for m in &p.members {
                let t = pending.iter().find(|t| &t.ev == m).unwrap();
                prop_assert_eq!((&t.origin, &t.destination), (&p.origin, &p.destination));
                seen.push(m.clone());
            }
        }
        for s in &plan.solo {
            prop_assert!(pending.iter().find(|t| &t.ev == s).unwrap().semi_autonomous);
            seen.push(s.clone());
        }
        for w in &plan.waiting {
            prop_assert!(!pending.iter().find(|t| &t.ev == w).unwrap().semi_autonomous);
            seen.push(w.clone());
        }
        seen.sort();
        let mut all: Vec<_> = pending.iter().map(|t| t.ev.clone()).collect();
        all.sort();
        prop_assert_eq!(seen, all);
    }
}
