//! Simulator and protocol library for a self-organised EV charging
//! marketplace: sealed-bid auctions, charging contracts, routing and a
//! hash-chained event ledger.

mod encoding;

pub mod auction;
pub mod contract;
pub mod events;
pub mod identity;
pub mod ledger;
pub mod marketplace;
pub mod mobility;
pub mod sim;
pub mod units;

pub use encoding::{canonical, div_round_half_up, round_half_up};
