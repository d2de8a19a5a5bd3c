//! City graph, routing, battery bookkeeping, trip admission and platoons.

mod graph;
mod platoon;
mod vehicle;

pub use graph::{CityGraph, Edge, GraphError, Metric, NodeId, Route, RouteError};
pub use platoon::{form_platoons, Leader, PendingTraveler, Platoon, PlatoonPlan, DEFAULT_MAX_PLATOON};
pub use vehicle::{
    advance_ev, feasible_trip, position_along, AdvanceStatus, Battery, BatteryError, Feasibility, InfeasibleReason,
    Position, Trip, TripPlan, Vehicle, RESERVE_PERCENT,
};
