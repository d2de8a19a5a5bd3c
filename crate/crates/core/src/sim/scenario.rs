use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contract::ContractTemplate;
use crate::identity::AgentId;
use crate::marketplace::{OwnerConstraints, StationProfile, WeatherTrace};
use crate::mobility::{Battery, CityGraph, NodeId, DEFAULT_MAX_PLATOON};

/// Id reserved for the conflict-resolution escrow, which also hosts auctions.
pub const ESCROW_ID: &str = "escrow";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvConfig {
    pub id: AgentId,
    pub home: NodeId,
    pub battery: Battery,
    pub constraints: OwnerConstraints,
    /// May drive without a platoon leader.
    #[serde(default = "yes")]
    pub semi_autonomous: bool,
    pub balance: u64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    #[serde(flatten)]
    pub profile: StationProfile,
    #[serde(default)]
    pub balance: u64,
    /// Answers liveness pings.
    #[serde(default = "yes")]
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountConfig {
    pub id: AgentId,
    #[serde(default)]
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderConfig {
    pub id: AgentId,
    #[serde(default = "yes")]
    pub fully_autonomous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonConfig {
    pub max_size: usize,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        PlatoonConfig {
            max_size: DEFAULT_MAX_PLATOON,
        }
    }
}

/// Per-tick probabilities of simulated sensor faults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Station supplies 70-99 % of its promised power.
    #[serde(default)]
    pub under_delivery: f64,
    /// Station supplies nothing.
    #[serde(default)]
    pub outage: f64,
    /// GPS loses the EV at the station.
    #[serde(default)]
    pub ev_absent: f64,
    /// Station misses the liveness ping during preparation.
    #[serde(default)]
    pub station_offline: f64,
}

impl FaultConfig {
    fn probabilities(&self) -> [(&'static str, f64); 4] {
        [
            ("under_delivery", self.under_delivery),
            ("outage", self.outage),
            ("ev_absent", self.ev_absent),
            ("station_offline", self.station_offline),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Simulated ticks `[start, end)`, one minute each.
    pub window: (u64, u64),
    pub city: CityGraph,
    pub evs: Vec<EvConfig>,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
    /// Private station owners.
    #[serde(default)]
    pub owners: Vec<AccountConfig>,
    #[serde(default)]
    pub leaders: Vec<LeaderConfig>,
    #[serde(default)]
    pub weather: WeatherTrace,
    #[serde(default)]
    pub platoon: PlatoonConfig,
    #[serde(default)]
    pub faults: FaultConfig,
    #[serde(default)]
    pub template: ContractTemplate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation")]
pub enum ScenarioViolation {
    EmptyWindow,
    DuplicateAgent { id: AgentId },
    ReservedId { id: AgentId },
    UnknownNode { agent: AgentId, node: NodeId },
    InvalidBattery { agent: AgentId, reason: String },
    InvalidConstraints { agent: AgentId, reason: String },
    FreeWindowOutsideRun { agent: AgentId },
    InvalidStation { agent: AgentId, reason: String },
    OwnerMismatch { agent: AgentId },
    UnknownOwner { agent: AgentId, owner: AgentId },
    InvalidWeather { reason: String },
    InvalidPlatoonSize,
    InvalidProbability { name: String },
}

impl fmt::Display for ScenarioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScenarioViolation::*;
        match self {
            EmptyWindow => write!(f, "EmptyWindow: window start must precede end"),
            DuplicateAgent { id } => write!(f, "DuplicateAgent: {id}"),
            ReservedId { id } => write!(f, "ReservedId: {id} is reserved"),
            UnknownNode { agent, node } => write!(f, "UnknownNode: {agent} refers to {node}"),
            InvalidBattery { agent, reason } => write!(f, "InvalidBattery: {agent}: {reason}"),
            InvalidConstraints { agent, reason } => write!(f, "InvalidConstraints: {agent}: {reason}"),
            FreeWindowOutsideRun { agent } => write!(f, "FreeWindowOutsideRun: {agent}"),
            InvalidStation { agent, reason } => write!(f, "InvalidStation: {agent}: {reason}"),
            OwnerMismatch { agent } => write!(f, "OwnerMismatch: {agent} owner kind and owner disagree"),
            UnknownOwner { agent, owner } => write!(f, "UnknownOwner: {agent} is owned by undeclared {owner}"),
            InvalidWeather { reason } => write!(f, "InvalidWeather: {reason}"),
            InvalidPlatoonSize => write!(f, "InvalidPlatoonSize: max_size must be at least 1"),
            InvalidProbability { name } => write!(f, "InvalidProbability: {name} outside [0, 1]"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| LoadError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// Every agent id in declaration order: EVs, stations, owners, leaders.
    pub fn agent_ids(&self) -> impl Iterator<Item = &AgentId> {
        self.evs
            .iter()
            .map(|e| &e.id)
            .chain(self.stations.iter().map(|s| &s.profile.id))
            .chain(self.owners.iter().map(|o| &o.id))
            .chain(self.leaders.iter().map(|l| &l.id))
    }

    /// Checks every scenario invariant and cross-reference. An empty list
    /// means the scenario is valid.
    pub fn validate(&self) -> Vec<ScenarioViolation> {
        use ScenarioViolation::*;
        let mut out = Vec::new();
        if self.window.0 >= self.window.1 {
            out.push(EmptyWindow);
        }
        let mut seen = BTreeSet::new();
        for id in self.agent_ids() {
            if id.as_str() == ESCROW_ID {
                out.push(ReservedId { id: id.clone() });
            } else if !seen.insert(id) {
                out.push(DuplicateAgent { id: id.clone() });
            }
        }
        for ev in &self.evs {
            if !self.city.contains(&ev.home) {
                out.push(UnknownNode {
                    agent: ev.id.clone(),
                    node: ev.home.clone(),
                });
            }
            if let Err(e) = ev.battery.validate() {
                out.push(InvalidBattery {
                    agent: ev.id.clone(),
                    reason: e.to_string(),
                });
            }
            if let Err(e) = ev.constraints.validate() {
                out.push(InvalidConstraints {
                    agent: ev.id.clone(),
                    reason: e.to_string(),
                });
            }
            let (fs, fe) = ev.constraints.free_window;
            if fs < self.window.0 || fe > self.window.1 {
                out.push(FreeWindowOutsideRun { agent: ev.id.clone() });
            }
        }
        let owners: BTreeSet<&AgentId> = self.owners.iter().map(|o| &o.id).collect();
        for s in &self.stations {
            let p = &s.profile;
            if !self.city.contains(&p.location) {
                out.push(UnknownNode {
                    agent: p.id.clone(),
                    node: p.location.clone(),
                });
            }
            if let Err(e) = p.validate() {
                out.push(InvalidStation {
                    agent: p.id.clone(),
                    reason: e.to_string(),
                });
            }
            use crate::marketplace::OwnerKind;
            match (&p.owner_kind, &p.owner) {
                (OwnerKind::Private, Some(owner)) if !owners.contains(owner) => out.push(UnknownOwner {
                    agent: p.id.clone(),
                    owner: owner.clone(),
                }),
                (OwnerKind::Private, None) | (OwnerKind::Public, Some(_)) => {
                    out.push(OwnerMismatch { agent: p.id.clone() })
                }
                _ => {}
            }
        }
        if !self.weather.is_sorted() {
            out.push(InvalidWeather {
                reason: "entries must be in strictly increasing tick order".into(),
            });
        }
        if self.weather.0.iter().any(|p| !p.state.is_valid()) {
            out.push(InvalidWeather {
                reason: "levels must lie in [0, 1]".into(),
            });
        }
        if self.platoon.max_size == 0 {
            out.push(InvalidPlatoonSize);
        }
        for (name, p) in self.faults.probabilities() {
            if !(0.0..=1.0).contains(&p) {
                out.push(InvalidProbability { name: name.into() });
            }
        }
        out
    }
}
