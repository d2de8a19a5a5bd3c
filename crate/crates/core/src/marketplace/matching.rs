use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{quote_reserve, OwnerConstraints, StationProfile, WeatherState};
use crate::auction::{run_auction_session, AuctionError, Participant, Price, Role, SessionReport};
use crate::contract::ContractTerms;
use crate::identity::{AgentId, AgentIdentity};
use crate::ledger::Recorder;
use crate::mobility::{feasible_trip, CityGraph, Feasibility, TripPlan, Vehicle};
use crate::units::energy_cost_cents;

/// Per-tick market conditions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub weather: WeatherState,
    /// Slots currently held by live contracts, per station.
    pub occupancy: BTreeMap<AgentId, u32>,
}

impl MarketState {
    pub fn occupied(&self, station: &AgentId) -> u32 {
        self.occupancy.get(station).copied().unwrap_or(0)
    }

    pub fn utilization(&self, station: &StationProfile) -> f64 {
        (self.occupied(&station.id) as f64 / station.slots as f64).min(1.0)
    }

    pub fn has_free_slot(&self, station: &StationProfile) -> bool {
        self.occupied(&station.id) < station.slots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub station: AgentId,
    pub quote: Price,
    /// Outbound meters.
    pub distance: u64,
    pub plan: TripPlan,
}

impl Candidate {
    fn key(&self) -> (Price, u64, &AgentId) {
        (self.quote, self.distance, &self.station)
    }
}

/// Stations that accept the EV's energy preferences, lie within its
/// distance budget, can charge it and get it home inside its free window,
/// have a free slot, and quote no more than its maximum price. Ordered by
/// quote, then distance, then station id.
pub fn find_candidates(
    ev: &Vehicle,
    constraints: &OwnerConstraints,
    stations: &[StationProfile],
    city: &CityGraph,
    tick: u64,
    market: &MarketState,
) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = stations
        .iter()
        .filter(|s| constraints.allowed_sources.contains(&s.power_source))
        .filter(|s| market.has_free_slot(s))
        .filter_map(|s| {
            let Feasibility::Ok(plan) = feasible_trip(ev, s, constraints, city, tick) else {
                return None;
            };
            let quote = quote_reserve(s, tick, &market.weather, market.utilization(s));
            (quote <= constraints.max_price).then(|| Candidate {
                station: s.id.clone(),
                quote,
                distance: plan.outbound.meters,
                plan,
            })
        })
        .collect();
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    out
}

/// Highest per-kWh price at which `energy_wh` plus `fee` stays within `balance`.
pub fn budget_cap(balance: u64, energy_wh: u64, fee: u64) -> Price {
    let Some(left) = balance.checked_sub(fee) else {
        return Price(0);
    };
    let (mut lo, mut hi) = (0u32, u32::MAX);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if energy_cost_cents(mid, energy_wh) <= left {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Price(lo)
}

pub trait BiddingStrategy {
    fn bid(&self, constraints: &OwnerConstraints, plan: &TripPlan, balance: u64, fee: u64) -> Price;
}

/// Bids the true valuation: the owner's price limit, lowered to what the
/// balance can pay for.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruthfulBidding;

impl BiddingStrategy for TruthfulBidding {
    fn bid(&self, constraints: &OwnerConstraints, plan: &TripPlan, balance: u64, fee: u64) -> Price {
        constraints.max_price.min(budget_cap(balance, plan.charge_energy_wh, fee))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatchRequest<'a> {
    pub identity: &'a AgentIdentity,
    pub vehicle: &'a Vehicle,
    pub constraints: &'a OwnerConstraints,
    pub balance: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct StationEntry<'a> {
    pub identity: &'a AgentIdentity,
    pub profile: &'a StationProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDraft {
    pub session: u64,
    pub terms: ContractTerms,
    pub plan: TripPlan,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchRound {
    pub drafts: Vec<MatchDraft>,
    pub sessions: Vec<SessionReport>,
    /// Had candidates but lost their session or found every station taken.
    pub deferred: Vec<AgentId>,
    pub without_candidates: Vec<AgentId>,
}

/// One round of matchmaking.
///
/// Each EV's cluster is the set of stations tied at the head of its
/// candidate list. EVs sharing a cluster meet those stations in a single
/// sealed-bid session; clusters are served in order and a station sells at
/// most one slot per tick. Matches become contract drafts timed to start on
/// arrival and end when the EV must leave to be home by its deadline.
#[allow(clippy::too_many_arguments)]
pub fn matchmake(
    requests: &[MatchRequest<'_>],
    stations: &[StationEntry<'_>],
    city: &CityGraph,
    tick: u64,
    market: &MarketState,
    strategy: &dyn BiddingStrategy,
    host: &AgentIdentity,
    next_session: &mut u64,
    recorder: &mut Recorder<'_>,
    rng: &mut dyn RngCore,
) -> Result<MatchRound, AuctionError> {
    let profiles: Vec<StationProfile> = stations.iter().map(|s| s.profile.clone()).collect();
    let by_id: BTreeMap<&AgentId, &StationEntry<'_>> = stations.iter().map(|s| (&s.profile.id, s)).collect();

    let mut requests: Vec<&MatchRequest<'_>> = requests.iter().collect();
    requests.sort_by(|a, b| a.identity.id().cmp(b.identity.id()));

    let mut round = MatchRound::default();
    let mut clusters: BTreeMap<BTreeSet<AgentId>, Vec<(&MatchRequest<'_>, Vec<Candidate>)>> = BTreeMap::new();
    for req in requests {
        let candidates = find_candidates(req.vehicle, req.constraints, &profiles, city, tick, market);
        let Some(head) = candidates.first() else {
            round.without_candidates.push(req.identity.id().clone());
            continue;
        };
        let top: BTreeSet<AgentId> = candidates
            .iter()
            .take_while(|c| (c.quote, c.distance) == (head.quote, head.distance))
            .map(|c| c.station.clone())
            .collect();
        clusters.entry(top).or_default().push((req, candidates));
    }

    let mut sold: BTreeSet<AgentId> = BTreeSet::new();
    for (cluster, members) in clusters {
        let sellers: Vec<&AgentId> = cluster.iter().filter(|s| !sold.contains(*s)).collect();
        if sellers.is_empty() {
            round.deferred.extend(members.iter().map(|(r, _)| r.identity.id().clone()));
            continue;
        }
        let quote_of = |station: &AgentId| -> Price {
            members[0].1.iter().find(|c| &c.station == station).expect("cluster station").quote
        };
        let fee = sellers.iter().map(|s| by_id[*s].profile.pricing.fixed_fee()).max().unwrap_or(0);

        let mut participants: Vec<Participant<'_>> = Vec::new();
        for (req, candidates) in &members {
            participants.push(Participant {
                identity: req.identity,
                role: Role::Buyer,
                price: strategy.bid(req.constraints, &candidates[0].plan, req.balance, fee),
                reveals: true,
            });
        }
        for s in &sellers {
            participants.push(Participant {
                identity: by_id[*s].identity,
                role: Role::Seller,
                price: quote_of(s),
                reveals: true,
            });
        }
        let session = *next_session;
        *next_session += 1;
        let report = run_auction_session(session, &participants, host, recorder, rng)?;

        for (req, candidates) in &members {
            let ev = req.identity.id();
            let Some(m) = report.outcome.match_of_buyer(ev) else {
                round.deferred.push(ev.clone());
                continue;
            };
            let candidate = candidates.iter().find(|c| c.station == m.seller).expect("matched station is a candidate");
            let profile = by_id[&m.seller].profile;
            sold.insert(m.seller.clone());
            let plan = candidate.plan.clone();
            let arrive = plan.depart_tick + plan.outbound.minutes;
            let leave_by = req.constraints.free_window.1 - plan.inbound.minutes;
            round.drafts.push(MatchDraft {
                session,
                terms: ContractTerms {
                    station: profile.id.clone(),
                    owner: profile.owner.clone(),
                    ev: ev.clone(),
                    station_location: profile.location.clone(),
                    power_source: profile.power_source,
                    timeframe: (arrive, leave_by),
                    charging_speed: profile.charging_speed,
                    expected_energy: plan.charge_energy_wh,
                    price: m.clearing_price,
                    penalty: profile.penalty,
                    fixed_fee: profile.pricing.fixed_fee(),
                },
                plan,
            });
        }
        round.sessions.push(report);
    }
    Ok(round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::KeyRegistry;
    use crate::ledger::Ledger;
    use crate::marketplace::{OwnerKind, PowerSource, PricingPolicy};
    use crate::mobility::{Battery, Edge, NodeId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn city() -> CityGraph {
        let e = |a: &str, b: &str, m: u32, t: u32| Edge { from: a.into(), to: b.into(), meters: m, minutes: t };
        CityGraph::new(
            ["A", "B", "C", "D"].map(NodeId::from),
            vec![e("A", "B", 1000, 3), e("A", "D", 2500, 6), e("A", "C", 4000, 9)],
        )
        .unwrap()
    }

    fn station(id: &str, source: PowerSource, base: u32) -> StationProfile {
        StationProfile {
            id: id.into(),
            location: id.into(),
            power_source: source,
            charging_speed: 11_000,
            slots: 1,
            owner_kind: OwnerKind::Public,
            owner: None,
            pricing: PricingPolicy::FixedPerKwh { base: Price(base) },
            penalty: 0,
        }
    }

    fn alice() -> (Vehicle, OwnerConstraints) {
        (
            Vehicle { location: "A".into(), battery: Battery::new(60_000, 20_000, 0.15).unwrap() },
            OwnerConstraints {
                max_price: Price(40),
                max_distance: 20_000,
                free_window: (0, 600),
                allowed_sources: [PowerSource::Solar, PowerSource::Wind].into_iter().collect(),
                required_energy: 20_000,
            },
        )
    }

    #[test]
    fn coal_is_filtered_for_renewable_owners() {
        let (ev, c) = alice();
        let stations = vec![
            station("B", PowerSource::Coal, 25),
            station("C", PowerSource::Wind, 30),
            station("D", PowerSource::Solar, 32),
        ];
        let got: Vec<String> = find_candidates(&ev, &c, &stations, &city(), 0, &MarketState::default())
            .into_iter()
            .map(|c| c.station.as_str().to_owned())
            .collect();
        assert_eq!(got, vec!["C", "D"]);
    }

    #[test]
    fn distance_limit_empties_the_list() {
        let (ev, mut c) = alice();
        c.max_distance = 1000;
        let stations = vec![station("B", PowerSource::Wind, 25)];
        assert!(find_candidates(&ev, &c, &stations, &city(), 0, &MarketState::default()).is_empty());
    }

    #[test]
    fn ties_order_by_id_and_full_stations_drop_out() {
        let g = CityGraph::new(
            ["A", "X"].map(NodeId::from),
            vec![Edge { from: "A".into(), to: "X".into(), meters: 500, minutes: 2 }],
        )
        .unwrap();
        let (ev, c) = alice();
        let mut s2 = station("s2", PowerSource::Wind, 30);
        let mut s1 = station("s1", PowerSource::Wind, 30);
        s1.location = "X".into();
        s2.location = "X".into();
        let stations = vec![s2, s1];
        let ids = |m: &MarketState| -> Vec<String> {
            find_candidates(&ev, &c, &stations, &g, 0, m).into_iter().map(|c| c.station.as_str().to_owned()).collect()
        };
        assert_eq!(ids(&MarketState::default()), vec!["s1", "s2"]);
        let mut busy = MarketState::default();
        busy.occupancy.insert("s1".into(), 1);
        assert_eq!(ids(&busy), vec!["s2"]);
    }

    #[test]
    fn budget_cap_respects_rounding_and_fee() {
        // 10 kWh: 33 c -> 330 cents
        assert_eq!(budget_cap(330, 10_000, 0), Price(33));
        assert_eq!(budget_cap(329, 10_000, 0), Price(32));
        assert_eq!(budget_cap(430, 10_000, 100), Price(33));
        assert_eq!(budget_cap(50, 10_000, 100), Price(0));
    }

    struct Market {
        evs: Vec<AgentIdentity>,
        stations: Vec<AgentIdentity>,
        host: AgentIdentity,
        ledger: Ledger,
    }

    fn market(evs: &[&str], stations: &[&str]) -> Market {
        let evs: Vec<AgentIdentity> = evs.iter().map(|id| AgentIdentity::derive(*id, 3)).collect();
        let stations: Vec<AgentIdentity> = stations.iter().map(|id| AgentIdentity::derive(*id, 3)).collect();
        let host = AgentIdentity::derive("escrow", 3);
        let mut reg = KeyRegistry::new();
        for a in evs.iter().chain(&stations).chain([&host]) {
            reg.register(a);
        }
        Market { evs, stations, host, ledger: Ledger::new(reg) }
    }

    #[test]
    fn single_ev_pays_the_reserve() {
        let mut m = market(&["alice"], &["C"]);
        let (ev, mut c) = alice();
        c.max_price = Price(35);
        let profile = station("C", PowerSource::Wind, 33);
        let req = [MatchRequest { identity: &m.evs[0], vehicle: &ev, constraints: &c, balance: 100_000 }];
        let st = [StationEntry { identity: &m.stations[0], profile: &profile }];
        let mut next = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rec = Recorder::new(&mut m.ledger, 0);
        let round = matchmake(
            &req, &st, &city(), 0, &MarketState::default(), &TruthfulBidding, &m.host, &mut next, &mut rec, &mut rng,
        )
        .unwrap();
        assert_eq!(round.drafts.len(), 1);
        assert_eq!(round.drafts[0].terms.price, Price(33));
        assert_eq!(round.drafts[0].terms.timeframe.0, 9);
        assert!(round.drafts[0].terms.validate().is_ok());
        assert_eq!(next, 1);
    }

    #[test]
    fn no_candidates_no_sessions() {
        let mut m = market(&["alice"], &["B"]);
        let (ev, c) = alice();
        let profile = station("B", PowerSource::Coal, 20);
        let req = [MatchRequest { identity: &m.evs[0], vehicle: &ev, constraints: &c, balance: 100_000 }];
        let st = [StationEntry { identity: &m.stations[0], profile: &profile }];
        let mut next = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rec = Recorder::new(&mut m.ledger, 0);
        let round = matchmake(
            &req, &st, &city(), 0, &MarketState::default(), &TruthfulBidding, &m.host, &mut next, &mut rec, &mut rng,
        )
        .unwrap();
        assert!(round.sessions.is_empty() && round.drafts.is_empty());
        assert_eq!(round.without_candidates.len(), 1);
        assert!(rec.pending().is_empty());
    }

    #[test]
    fn three_evs_two_slots_one_deferred() {
        let mut m = market(&["ev1", "ev2", "ev3"], &["s1", "s2"]);
        let g = CityGraph::new(
            ["A", "X"].map(NodeId::from),
            vec![Edge { from: "A".into(), to: "X".into(), meters: 500, minutes: 2 }],
        )
        .unwrap();
        let (ev, base) = alice();
        let cons: Vec<OwnerConstraints> = [40, 35, 30]
            .iter()
            .map(|p| OwnerConstraints { max_price: Price(*p), ..base.clone() })
            .collect();
        let mut profiles = vec![station("s1", PowerSource::Wind, 28), station("s2", PowerSource::Wind, 28)];
        for p in &mut profiles {
            p.location = "X".into();
        }
        let req: Vec<MatchRequest<'_>> = (0..3)
            .map(|i| MatchRequest { identity: &m.evs[i], vehicle: &ev, constraints: &cons[i], balance: 100_000 })
            .collect();
        let st: Vec<StationEntry<'_>> =
            (0..2).map(|i| StationEntry { identity: &m.stations[i], profile: &profiles[i] }).collect();
        let mut next = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rec = Recorder::new(&mut m.ledger, 0);
        let round =
            matchmake(&req, &st, &g, 0, &MarketState::default(), &TruthfulBidding, &m.host, &mut next, &mut rec, &mut rng)
                .unwrap();
        assert_eq!(round.sessions.len(), 1);
        assert_eq!(round.drafts.len(), 2);
        assert_eq!(round.deferred, vec![AgentId::from("ev3")]);
        // rank 0 pays the next bid (35), rank 1 pays max(28, 30)
        let prices: Vec<(String, u32)> =
            round.drafts.iter().map(|d| (d.terms.ev.as_str().to_owned(), d.terms.price.0)).collect();
        assert_eq!(prices, vec![("ev1".into(), 35), ("ev2".into(), 30)]);
    }
}
