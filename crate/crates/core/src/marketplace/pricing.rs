use serde::{Deserialize, Serialize};

use super::{PowerSource, StationProfile};
use crate::auction::Price;
use crate::encoding::round_half_up;

const MINUTES_PER_DAY: u64 = 1440;

/// Sunshine and wind levels in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherState {
    pub sunshine: f64,
    pub wind: f64,
}

impl WeatherState {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.sunshine) && (0.0..=1.0).contains(&self.wind)
    }
}

/// Piecewise-constant weather: each entry holds from its tick until the next.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeatherTrace(pub Vec<WeatherPoint>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherPoint {
    pub from_tick: u64,
    #[serde(flatten)]
    pub state: WeatherState,
}

impl WeatherTrace {
    pub fn constant(state: WeatherState) -> Self {
        WeatherTrace(vec![WeatherPoint { from_tick: 0, state }])
    }

    /// Calm, dark weather before the first entry.
    pub fn at(&self, tick: u64) -> WeatherState {
        self.0
            .iter()
            .take_while(|p| p.from_tick <= tick)
            .last()
            .map(|p| p.state)
            .unwrap_or_default()
    }

    pub fn is_sorted(&self) -> bool {
        self.0.windows(2).all(|w| w[0].from_tick < w[1].from_tick)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PricingPolicy {
    FixedPerKwh {
        base: Price,
    },
    /// Per-kWh base plus a flat fee in cents settled outside the auction.
    FlatPlusFee {
        base: Price,
        fee: u64,
    },
    /// Discounted during the night window, given as minutes of the day; the
    /// window may wrap past midnight.
    TimeOfDay {
        base: Price,
        discount: f64,
        night: (u64, u64),
    },
    /// Discounted by the level of the station's own resource (sunshine for
    /// solar, wind for wind; other sources are unaffected).
    WeatherLinked {
        base: Price,
        discount: f64,
    },
    UtilizationLinked {
        base: Price,
        multiplier: f64,
    },
}

impl PricingPolicy {
    pub fn base(&self) -> Price {
        match self {
            PricingPolicy::FixedPerKwh { base }
            | PricingPolicy::FlatPlusFee { base, .. }
            | PricingPolicy::TimeOfDay { base, .. }
            | PricingPolicy::WeatherLinked { base, .. }
            | PricingPolicy::UtilizationLinked { base, .. } => *base,
        }
    }

    pub fn fixed_fee(&self) -> u64 {
        match self {
            PricingPolicy::FlatPlusFee { fee, .. } => *fee,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            PricingPolicy::TimeOfDay { discount, night, .. } => {
                if !(0.0..=1.0).contains(discount) {
                    return Err(format!("discount {discount} outside [0, 1]"));
                }
                if night.0 >= MINUTES_PER_DAY || night.1 >= MINUTES_PER_DAY {
                    return Err("night window must be minutes of the day".into());
                }
            }
            PricingPolicy::WeatherLinked { discount, .. } if !(0.0..=1.0).contains(discount) => {
                return Err(format!("discount {discount} outside [0, 1]"));
            }
            PricingPolicy::UtilizationLinked { multiplier, .. } if !(*multiplier >= 0.0 && multiplier.is_finite()) => {
                return Err(format!("multiplier {multiplier} must be non-negative"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn in_night(tick: u64, (start, end): (u64, u64)) -> bool {
    let m = tick % MINUTES_PER_DAY;
    if start <= end {
        (start..end).contains(&m)
    } else {
        m >= start || m < end
    }
}

/// Station's reserve price for `tick`, rounded half-up to whole cents and
/// never below one cent.
pub fn quote_reserve(station: &StationProfile, tick: u64, weather: &WeatherState, utilization: f64) -> Price {
    let utilization = utilization.clamp(0.0, 1.0);
    let base = station.pricing.base().0 as f64;
    let quote = match &station.pricing {
        PricingPolicy::FixedPerKwh { .. } | PricingPolicy::FlatPlusFee { .. } => base,
        PricingPolicy::TimeOfDay { discount, night, .. } => {
            if in_night(tick, *night) {
                base * (1.0 - discount)
            } else {
                base
            }
        }
        PricingPolicy::WeatherLinked { discount, .. } => {
            let level = match station.power_source {
                PowerSource::Solar => weather.sunshine,
                PowerSource::Wind => weather.wind,
                _ => 0.0,
            };
            base * (1.0 - level.clamp(0.0, 1.0) * discount)
        }
        PricingPolicy::UtilizationLinked { multiplier, .. } => base * (1.0 + multiplier * utilization),
    };
    Price(round_half_up(quote).clamp(1, u32::MAX as u64) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketplace::OwnerKind;

    fn station(source: PowerSource, pricing: PricingPolicy) -> StationProfile {
        StationProfile {
            id: "s".into(),
            location: "n".into(),
            power_source: source,
            charging_speed: 7000,
            slots: 1,
            owner_kind: OwnerKind::Public,
            owner: None,
            pricing,
            penalty: 0,
        }
    }

    #[test]
    fn fixed_is_constant() {
        let s = station(PowerSource::Coal, PricingPolicy::FixedPerKwh { base: Price(33) });
        for t in [0, 700, 1439, 5000] {
            assert_eq!(quote_reserve(&s, t, &WeatherState::default(), 0.5), Price(33));
        }
    }

    #[test]
    fn night_discount() {
        let s = station(
            PowerSource::GridMix,
            PricingPolicy::TimeOfDay { base: Price(40), discount: 0.25, night: (1320, 360) },
        );
        let w = WeatherState::default();
        assert_eq!(quote_reserve(&s, 1400, &w, 0.0), Price(30));
        assert_eq!(quote_reserve(&s, 1440 + 100, &w, 0.0), Price(30));
        assert_eq!(quote_reserve(&s, 720, &w, 0.0), Price(40));
    }

    #[test]
    fn weather_uses_own_resource() {
        let p = PricingPolicy::WeatherLinked { base: Price(30), discount: 0.5 };
        let solar = station(PowerSource::Solar, p.clone());
        let wind = station(PowerSource::Wind, p);
        let sunny = WeatherState { sunshine: 1.0, wind: 0.0 };
        assert_eq!(quote_reserve(&solar, 0, &WeatherState::default(), 0.0), Price(30));
        assert_eq!(quote_reserve(&solar, 0, &sunny, 0.0), Price(15));
        assert_eq!(quote_reserve(&wind, 0, &sunny, 0.0), Price(30));
    }

    #[test]
    fn utilization_raises_price_and_floor_is_one_cent() {
        let s = station(PowerSource::Wind, PricingPolicy::UtilizationLinked { base: Price(20), multiplier: 0.5 });
        assert_eq!(quote_reserve(&s, 0, &WeatherState::default(), 1.0), Price(30));
        let free = station(PowerSource::Wind, PricingPolicy::FixedPerKwh { base: Price(0) });
        assert_eq!(quote_reserve(&free, 0, &WeatherState::default(), 0.0), Price(1));
    }

    #[test]
    fn trace_is_piecewise_constant() {
        let t = WeatherTrace(vec![
            WeatherPoint { from_tick: 10, state: WeatherState { sunshine: 0.5, wind: 0.1 } },
            WeatherPoint { from_tick: 20, state: WeatherState { sunshine: 0.0, wind: 0.9 } },
        ]);
        assert_eq!(t.at(5), WeatherState::default());
        assert_eq!(t.at(10).sunshine, 0.5);
        assert_eq!(t.at(19).sunshine, 0.5);
        assert_eq!(t.at(25).wind, 0.9);
    }

    #[test]
    fn rejects_bad_discount() {
        assert!(PricingPolicy::WeatherLinked { base: Price(1), discount: 1.5 }.validate().is_err());
        assert!(PricingPolicy::UtilizationLinked { base: Price(1), multiplier: -1.0 }.validate().is_err());
    }
}
