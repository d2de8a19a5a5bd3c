//! Seeded random scenarios for property tests and benchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{AccountConfig, EvConfig, FaultConfig, LeaderConfig, PlatoonConfig, Scenario, StationConfig};
use crate::auction::Price;
use crate::contract::ContractTemplate;
use crate::identity::AgentId;
use crate::marketplace::{
    OwnerConstraints, OwnerKind, PowerSource, PricingPolicy, StationProfile, WeatherPoint, WeatherState, WeatherTrace,
};
use crate::mobility::{Battery, CityGraph, Edge, NodeId};

const SOURCES: [PowerSource; 5] = [
    PowerSource::Solar,
    PowerSource::Wind,
    PowerSource::Coal,
    PowerSource::Nuclear,
    PowerSource::GridMix,
];

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub max_nodes: usize,
    pub max_evs: usize,
    pub max_stations: usize,
    /// Enable random sensor faults.
    pub faults: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            max_nodes: 6,
            max_evs: 4,
            max_stations: 4,
            faults: true,
        }
    }
}

fn pricing(rng: &mut ChaCha8Rng) -> PricingPolicy {
    let base = Price(rng.gen_range(10..=45));
    match rng.gen_range(0..5) {
        0 => PricingPolicy::FixedPerKwh { base },
        1 => PricingPolicy::FlatPlusFee {
            base,
            fee: rng.gen_range(0..=80),
        },
        2 => PricingPolicy::TimeOfDay {
            base,
            discount: rng.gen_range(0.0..=0.5),
            night: (rng.gen_range(0..1440), rng.gen_range(0..1440)),
        },
        3 => PricingPolicy::WeatherLinked {
            base,
            discount: rng.gen_range(0.0..=0.5),
        },
        _ => PricingPolicy::UtilizationLinked {
            base,
            multiplier: rng.gen_range(0.0..=1.0),
        },
    }
}

/// Small connected city, a handful of agents and a short window. The result
/// always validates.
pub fn random_scenario(seed: u64, opts: SynthOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=opts.max_nodes.max(2));
    let nodes: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("n{i}"))).collect();
    let mut edges = Vec::new();
    let edge = |rng: &mut ChaCha8Rng, a: &NodeId, b: &NodeId| Edge {
        from: a.clone(),
        to: b.clone(),
        meters: rng.gen_range(300..=4000),
        minutes: rng.gen_range(1..=8),
    };
    // Random spanning tree, then a few shortcuts.
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push(edge(&mut rng, &nodes[i], &nodes[j]));
    }
    for _ in 0..rng.gen_range(0..n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push(edge(&mut rng, &nodes[a], &nodes[b]));
        }
    }
    let city = CityGraph::new(nodes.iter().cloned(), edges).expect("generated graph is valid");

    let start = rng.gen_range(0..1440);
    let len = rng.gen_range(60..=240);
    let window = (start, start + len);

    let n_stations = rng.gen_range(0..=opts.max_stations);
    let mut stations = Vec::new();
    let mut owners = Vec::new();
    for i in 0..n_stations {
        let private = rng.gen_bool(0.3);
        let owner: Option<AgentId> = private.then(|| format!("owner{i}").into());
        if let Some(o) = &owner {
            owners.push(AccountConfig {
                id: o.clone(),
                balance: rng.gen_range(0..=500),
            });
        }
        stations.push(StationConfig {
            profile: StationProfile {
                id: format!("s{i}").into(),
                location: nodes.choose(&mut rng).unwrap().clone(),
                power_source: *SOURCES.choose(&mut rng).unwrap(),
                charging_speed: [3700, 7400, 11000, 22000, 50000][rng.gen_range(0..5)],
                slots: rng.gen_range(1..=3),
                owner_kind: if private { OwnerKind::Private } else { OwnerKind::Public },
                owner,
                pricing: pricing(&mut rng),
                penalty: rng.gen_range(0..=100),
            },
            balance: rng.gen_range(0..=1000),
            online: true,
        });
    }

    let n_evs = rng.gen_range(1..=opts.max_evs.max(1));
    let mut evs = Vec::new();
    for i in 0..n_evs {
        let capacity = rng.gen_range(20..=80) * 1000;
        let soc = rng.gen_range(capacity / 10..=capacity * 9 / 10);
        let fs = rng.gen_range(window.0..window.1 - 30);
        let fe = rng.gen_range(fs + 30..=window.1);
        let mut allowed: BTreeSet<PowerSource> = SOURCES.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if allowed.is_empty() {
            allowed.insert(*SOURCES.choose(&mut rng).unwrap());
        }
        evs.push(EvConfig {
            id: format!("ev{i}").into(),
            home: nodes.choose(&mut rng).unwrap().clone(),
            battery: Battery {
                capacity_wh: capacity,
                soc_wh: soc,
                consumption_wh_per_m: rng.gen_range(0.1..=0.25),
            },
            constraints: OwnerConstraints {
                max_price: Price(rng.gen_range(15..=60)),
                max_distance: rng.gen_range(2000..=30000),
                free_window: (fs, fe),
                allowed_sources: allowed,
                required_energy: rng.gen_range(1..=30) * 1000,
            },
            semi_autonomous: rng.gen_bool(0.7),
            balance: rng.gen_range(0..=3000),
        });
    }

    let leaders = (0..rng.gen_range(0..=2))
        .map(|i| LeaderConfig {
            id: format!("leader{i}").into(),
            fully_autonomous: rng.gen_bool(0.8),
        })
        .collect();

    let weather = WeatherTrace(
        (0..rng.gen_range(0..=3))
            .map(|k| WeatherPoint {
                from_tick: window.0 + k * len / 3,
                state: WeatherState {
                    sunshine: rng.gen_range(0.0..=1.0),
                    wind: rng.gen_range(0.0..=1.0),
                },
            })
            .collect(),
    );

    let faults = if opts.faults {
        FaultConfig {
            under_delivery: rng.gen_range(0.0..0.03),
            outage: rng.gen_range(0.0..0.05),
            ev_absent: rng.gen_range(0.0..0.05),
            station_offline: rng.gen_range(0.0..0.2),
        }
    } else {
        FaultConfig::default()
    };

    Scenario {
        seed,
        window,
        city,
        evs,
        stations,
        owners,
        leaders,
        weather,
        platoon: PlatoonConfig {
            max_size: rng.gen_range(1..=4),
        },
        faults,
        template: ContractTemplate::default(),
    }
}
