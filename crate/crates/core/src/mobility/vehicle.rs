use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{CityGraph, Metric, NodeId, Route};
use crate::encoding::{div_round_half_up, round_half_up};
use crate::marketplace::{OwnerConstraints, StationProfile};
use crate::units::charging_ticks;

/// Share of capacity kept in reserve when admitting an outbound leg.
pub const RESERVE_PERCENT: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatteryError {
    #[error("state of charge {soc} Wh exceeds capacity {capacity} Wh")]
    SocAboveCapacity { soc: u64, capacity: u64 },
    #[error("consumption must be positive")]
    NonPositiveConsumption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_wh: u64,
    pub soc_wh: u64,
    pub consumption_wh_per_m: f64,
}

impl Battery {
    pub fn new(capacity_wh: u64, soc_wh: u64, consumption_wh_per_m: f64) -> Result<Self, BatteryError> {
        let b = Battery {
            capacity_wh,
            soc_wh,
            consumption_wh_per_m,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        if self.soc_wh > self.capacity_wh {
            return Err(BatteryError::SocAboveCapacity {
                soc: self.soc_wh,
                capacity: self.capacity_wh,
            });
        }
        if !(self.consumption_wh_per_m > 0.0 && self.consumption_wh_per_m.is_finite()) {
            return Err(BatteryError::NonPositiveConsumption);
        }
        Ok(())
    }

    /// Energy to drive `meters`, rounded half-up to whole Wh.
    pub fn energy_for(&self, meters: u64) -> u64 {
        round_half_up(meters as f64 * self.consumption_wh_per_m)
    }

    pub fn headroom_wh(&self) -> u64 {
        self.capacity_wh - self.soc_wh
    }

    pub fn reserve_wh(&self) -> u64 {
        div_round_half_up(self.capacity_wh * RESERVE_PERCENT, 100)
    }

    /// Adds up to `wh`, capped at capacity. Returns the amount stored.
    pub fn charge(&mut self, wh: u64) -> u64 {
        let stored = wh.min(self.headroom_wh());
        self.soc_wh += stored;
        stored
    }
}

/// Where a vehicle is: at a node or `meters` along the edge `from -> to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Position {
    Node(NodeId),
    Edge { from: NodeId, to: NodeId, meters: u64 },
}

/// Progress along a route. Energy is charged against cumulative distance so
/// the total over a full traversal equals the route's energy exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub route: Route,
    pub elapsed_minutes: u64,
    pub meters_done: u64,
    pub energy_used_wh: u64,
    pub stranded: bool,
}

impl Trip {
    pub fn new(route: Route) -> Self {
        Trip {
            route,
            elapsed_minutes: 0,
            meters_done: 0,
            energy_used_wh: 0,
            stranded: false,
        }
    }

    pub fn arrived(&self) -> bool {
        !self.stranded && self.meters_done == self.route.meters && self.elapsed_minutes >= self.route.minutes
    }

    pub fn position(&self) -> Position {
        position_along(&self.route, self.meters_done)
    }
}

pub fn position_along(route: &Route, meters: u64) -> Position {
    let mut left = meters;
    for (i, (m, _)) in route.legs.iter().enumerate() {
        let m = *m as u64;
        if left < m {
            if left == 0 {
                return Position::Node(route.nodes[i].clone());
            }
            return Position::Edge {
                from: route.nodes[i].clone(),
                to: route.nodes[i + 1].clone(),
                meters: left,
            };
        }
        left -= m;
    }
    Position::Node(route.destination().clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvanceStatus {
    Moving,
    Arrived,
    /// Battery ran dry at `position`. The trip does not progress further.
    Stranded { position: Position },
}

/// Moves a vehicle `minutes` further along `trip`, proportionally to travel
/// time, and debits the battery for the distance covered.
pub fn advance_ev(battery: &mut Battery, trip: &mut Trip, minutes: u64) -> AdvanceStatus {
    if trip.stranded {
        return AdvanceStatus::Stranded {
            position: trip.position(),
        };
    }
    let total_minutes = trip.route.minutes;
    trip.elapsed_minutes = (trip.elapsed_minutes + minutes).min(total_minutes);
    let target = (trip.route.meters * trip.elapsed_minutes)
        .checked_div(total_minutes)
        .unwrap_or(trip.route.meters);
    let needed = battery.energy_for(target) - trip.energy_used_wh;
    if needed > battery.soc_wh {
        // furthest point the remaining charge reaches, by linear interpolation
        let budget = trip.energy_used_wh + battery.soc_wh;
        let mut reach = ((budget as f64) / battery.consumption_wh_per_m).floor() as u64;
        reach = reach.clamp(trip.meters_done, target);
        while reach > trip.meters_done && battery.energy_for(reach) > budget {
            reach -= 1;
        }
        let used = battery.energy_for(reach) - trip.energy_used_wh;
        battery.soc_wh -= used;
        trip.energy_used_wh += used;
        trip.meters_done = reach;
        trip.stranded = true;
        return AdvanceStatus::Stranded {
            position: trip.position(),
        };
    }
    battery.soc_wh -= needed;
    trip.energy_used_wh += needed;
    trip.meters_done = target;
    if trip.arrived() {
        AdvanceStatus::Arrived
    } else {
        AdvanceStatus::Moving
    }
}

/// Ground-level facts about a vehicle needed for trip planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub location: NodeId,
    pub battery: Battery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleReason {
    Unreachable,
    InsufficientCharge,
    InsufficientReturnCharge,
    WindowTooShort,
    TooFar,
    NothingToCharge,
    SpeedTooLow,
}

/// Admitted round trip home -> station -> home.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripPlan {
    pub outbound: Route,
    pub inbound: Route,
    pub outbound_energy_wh: u64,
    pub inbound_energy_wh: u64,
    /// Energy to buy: the owner's requirement, capped by battery headroom on arrival.
    pub charge_energy_wh: u64,
    pub charge_minutes: u64,
    /// Departure tick (the later of `tick` and the window start).
    pub depart_tick: u64,
}

impl TripPlan {
    pub fn total_minutes(&self) -> u64 {
        self.outbound.minutes + self.charge_minutes + self.inbound.minutes
    }

    pub fn round_trip_meters(&self) -> u64 {
        self.outbound.meters + self.inbound.meters
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Ok(TripPlan),
    Infeasible(InfeasibleReason),
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Feasibility::Ok(_))
    }

    pub fn plan(&self) -> Option<&TripPlan> {
        match self {
            Feasibility::Ok(p) => Some(p),
            Feasibility::Infeasible(_) => None,
        }
    }
}

/// Checks a home -> station -> home trip starting at `tick`: the outbound leg
/// must leave the 5 % reserve untouched, travel plus charging plus return
/// must fit in the remaining free window (boundary inclusive), the round
/// trip must respect the distance limit, and the charge bought must cover
/// the way back.
pub fn feasible_trip(
    ev: &Vehicle,
    station: &StationProfile,
    constraints: &OwnerConstraints,
    city: &CityGraph,
    tick: u64,
) -> Feasibility {
    use Feasibility::Infeasible;
    use InfeasibleReason::*;

    let Ok(outbound) = city.shortest_path(&ev.location, &station.location, Metric::Meters) else {
        return Infeasible(Unreachable);
    };
    let inbound = outbound.reversed();
    let battery = &ev.battery;
    let out_wh = battery.energy_for(outbound.meters);
    let in_wh = battery.energy_for(inbound.meters);
    if battery.soc_wh < out_wh + battery.reserve_wh() {
        return Infeasible(InsufficientCharge);
    }
    if outbound.meters + inbound.meters > constraints.max_distance {
        return Infeasible(TooFar);
    }
    let soc_on_arrival = battery.soc_wh - out_wh;
    let charge = constraints.required_energy.min(battery.capacity_wh - soc_on_arrival);
    if charge == 0 {
        return Infeasible(NothingToCharge);
    }
    let Some(charge_minutes) = charging_ticks(charge, station.charging_speed) else {
        return Infeasible(SpeedTooLow);
    };
    let (start, end) = constraints.free_window;
    let depart = tick.max(start);
    if depart >= end || outbound.minutes + charge_minutes + inbound.minutes > end - depart {
        return Infeasible(WindowTooShort);
    }
    if soc_on_arrival + charge < in_wh {
        return Infeasible(InsufficientReturnCharge);
    }
    Feasibility::Ok(TripPlan {
        outbound,
        inbound,
        outbound_energy_wh: out_wh,
        inbound_energy_wh: in_wh,
        charge_energy_wh: charge,
        charge_minutes,
        depart_tick: depart,
    })
}
