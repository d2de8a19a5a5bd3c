//! Tick, energy and money conversions shared by charging, routing and
//! payment code. One tick is one minute.

use crate::encoding::div_round_half_up;

pub const MINUTES_PER_TICK: u64 = 1;

/// Watt-hours delivered in one tick at `speed_w`, rounded half-up
/// (7 kW gives 117 Wh).
pub fn energy_per_tick(speed_w: u32) -> u64 {
    div_round_half_up(speed_w as u64 * MINUTES_PER_TICK, 60)
}

/// Ticks needed to deliver `energy_wh` at `speed_w`.
///
/// Takes the larger of the exact-rate duration and the per-tick delivery
/// count, so the duration both covers `energy_wh` at the nominal rate and is
/// long enough for the rounded per-tick charging to finish. `None` when
/// the speed delivers nothing per tick.
pub fn charging_ticks(energy_wh: u64, speed_w: u32) -> Option<u64> {
    let per_tick = energy_per_tick(speed_w);
    if per_tick == 0 {
        return None;
    }
    let exact = (energy_wh * 60).div_ceil(speed_w as u64 * MINUTES_PER_TICK);
    Some(exact.max(energy_wh.div_ceil(per_tick)))
}

/// Euro-cents owed for `energy_wh` at `price_cents_per_kwh`, rounded half-up.
pub fn energy_cost_cents(price_cents_per_kwh: u32, energy_wh: u64) -> u64 {
    div_round_half_up(price_cents_per_kwh as u64 * energy_wh, 1000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_kilowatts_per_minute() {
        // 7000 / 60 = 116.67 -> 117
        assert_eq!(energy_per_tick(7000), 117);
    }

    #[test]
    fn charging_ticks_covers_both_bounds() {
        assert_eq!(charging_ticks(7000, 7000), Some(60));
        // 6020 W -> 100 Wh per tick, 6020 Wh needs 61 ticks although the exact rate says 60
        assert_eq!(charging_ticks(6020, 6020), Some(61));
        // 117 Wh at 7 kW: one tick delivers it but the nominal rate needs two
        assert_eq!(charging_ticks(117, 7000), Some(2));
        assert_eq!(charging_ticks(10, 20), None);
    }

    #[test]
    fn cost_rounds_half_up() {
        assert_eq!(energy_cost_cents(33, 10_000), 330);
        assert_eq!(energy_cost_cents(33, 15), 0); // 0.495
        assert_eq!(energy_cost_cents(33, 16), 1); // 0.528
    }
}
