use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::NodeId;
use crate::identity::AgentId;

pub const DEFAULT_MAX_PLATOON: usize = 4;

/// An agent able to guide a platoon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leader {
    pub id: AgentId,
    pub fully_autonomous: bool,
}

/// A vehicle about to travel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingTraveler {
    pub ev: AgentId,
    pub origin: NodeId,
    /// Destination cluster (station node, or home for return legs).
    pub destination: NodeId,
    pub semi_autonomous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Platoon {
    pub leader: AgentId,
    pub members: Vec<AgentId>,
    pub origin: NodeId,
    pub destination: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlatoonPlan {
    pub platoons: Vec<Platoon>,
    /// Semi-autonomous vehicles left without a leader, travelling alone.
    pub solo: Vec<AgentId>,
    /// Vehicles that can neither join a platoon nor drive alone.
    pub waiting: Vec<AgentId>,
}

/// Groups travellers sharing origin and destination into platoons of at most
/// `max_size`, filled greedily in id order, and hands out leaders in id
/// order. Groups containing a vehicle that cannot drive alone get leaders
/// first. Leaders without the autonomy flag are ignored.
pub fn form_platoons(pending: &[PendingTraveler], leaders: &[Leader], max_size: usize) -> PlatoonPlan {
    let max_size = max_size.max(1);
    let mut groups: BTreeMap<(&NodeId, &NodeId), Vec<&PendingTraveler>> = BTreeMap::new();
    for p in pending {
        groups.entry((&p.origin, &p.destination)).or_default().push(p);
    }
    let mut chunks: Vec<Vec<&PendingTraveler>> = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| a.ev.cmp(&b.ev));
        chunks.extend(members.chunks(max_size).map(|c| c.to_vec()));
    }
    // stable: needy chunks first, otherwise keep (origin, destination, id) order
    chunks.sort_by_key(|c| c.iter().all(|p| p.semi_autonomous));

    let mut available: Vec<&Leader> = leaders.iter().filter(|l| l.fully_autonomous).collect();
    available.sort_by(|a, b| a.id.cmp(&b.id));
    let mut available = available.into_iter();

    let mut plan = PlatoonPlan::default();
    for chunk in chunks {
        match available.next() {
            Some(leader) => plan.platoons.push(Platoon {
                leader: leader.id.clone(),
                members: chunk.iter().map(|p| p.ev.clone()).collect(),
                origin: chunk[0].origin.clone(),
                destination: chunk[0].destination.clone(),
            }),
            None => {
                for p in chunk {
                    if p.semi_autonomous {
                        plan.solo.push(p.ev.clone());
                    } else {
                        plan.waiting.push(p.ev.clone());
                    }
                }
            }
        }
    }
    plan.solo.sort();
    plan.waiting.sort();
    plan
}

#[cfg(test)]
mod tests {
    use super::*;

    fn travellers(n: usize, dest: &str, semi: bool) -> Vec<PendingTraveler> {
        (0..n)
            .map(|i| PendingTraveler {
                ev: AgentId::new(format!("ev{i}")),
                origin: "A".into(),
                destination: dest.into(),
                semi_autonomous: semi,
            })
            .collect()
    }

    fn leaders(n: usize) -> Vec<Leader> {
        (0..n)
            .map(|i| Leader { id: AgentId::new(format!("lead{i}")), fully_autonomous: true })
            .collect()
    }

    #[test]
    fn one_platoon_of_three() {
        let plan = form_platoons(&travellers(3, "C", false), &leaders(1), DEFAULT_MAX_PLATOON);
        assert_eq!(plan.platoons.len(), 1);
        assert_eq!(plan.platoons[0].members.len(), 3);
        assert!(plan.waiting.is_empty());
    }

    #[test]
    fn no_leaders_everyone_waits() {
        let plan = form_platoons(&travellers(3, "C", false), &[], DEFAULT_MAX_PLATOON);
        assert!(plan.platoons.is_empty());
        assert_eq!(plan.waiting.len(), 3);
        assert!(plan.solo.is_empty());
    }

    #[test]
    fn six_vehicles_split_four_and_two() {
        let plan = form_platoons(&travellers(6, "C", false), &leaders(2), 4);
        let sizes: Vec<usize> = plan.platoons.iter().map(|p| p.members.len()).collect();
        assert_eq!(sizes, vec![4, 2]);
        assert_eq!(plan.platoons[0].members[0], AgentId::from("ev0"));
        assert_eq!(plan.platoons[1].leader, AgentId::from("lead1"));
    }

    #[test]
    fn semi_autonomous_drive_alone_without_leader() {
        let plan = form_platoons(&travellers(2, "C", true), &[], 4);
        assert_eq!(plan.solo.len(), 2);
    }

    #[test]
    fn needy_groups_get_leaders_first() {
        let mut p = travellers(1, "B", true);
        p.extend(travellers(1, "C", false).into_iter().map(|mut t| {
            t.ev = "z".into();
            t
        }));
        let plan = form_platoons(&p, &leaders(1), 4);
        assert_eq!(plan.platoons[0].members, vec![AgentId::from("z")]);
        assert_eq!(plan.solo, vec![AgentId::from("ev0")]);
    }

    #[test]
    fn leaders_without_flag_are_ignored() {
        let l = vec![Leader { id: "x".into(), fully_autonomous: false }];
        let plan = form_platoons(&travellers(1, "C", false), &l, 4);
        assert_eq!(plan.waiting.len(), 1);
    }
}
