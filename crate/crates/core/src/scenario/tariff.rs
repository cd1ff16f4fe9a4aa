use alloc::format;

use crate::error::{Error, Result};

pub const HOURS: usize = 24;

/// Flat retail price, €/kWh.
pub const FLAT_PRICE: f64 = 0.18736;
pub const DOUBLE_DAY_PRICE: f64 = 0.18996;
pub const DOUBLE_NIGHT_PRICE: f64 = 0.17766;
/// What the utility pays for exported energy, €/kWh.
pub const BUYBACK_PRICE: f64 = 0.1417;
/// Added to the wholesale series of a dynamic contract, €/kWh.
pub const DYNAMIC_FEE: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TariffKind {
    Dynamic,
    Double,
    Flat,
}

impl TariffKind {
    /// Order used by tariff mixes.
    pub const ALL: [TariffKind; 3] = [TariffKind::Dynamic, TariffKind::Double, TariffKind::Flat];

    pub fn name(self) -> &'static str {
        match self {
            TariffKind::Dynamic => "dynamic",
            TariffKind::Double => "double",
            TariffKind::Flat => "flat",
        }
    }
}

/// Double tariffs charge the day price for hours 06:00–22:00.
pub fn is_day_hour(hour: usize) -> bool {
    (6..22).contains(&hour)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TariffSchedule {
    kind: TariffKind,
    retail: [f64; HOURS],
    buyback: f64,
}

impl TariffSchedule {
    /// Checks the shape rules of `kind` and `buyback ≤ min retail`.
    pub fn new(kind: TariffKind, retail: [f64; HOURS], buyback: f64) -> Result<Self> {
        let bad = |what: &str| Err(Error::InvalidScenario(format!("{} tariff: {what}", kind.name())));
        if retail.iter().chain([&buyback]).any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("prices must be finite and nonnegative");
        }
        match kind {
            TariffKind::Flat => {
                if retail.iter().any(|&p| p != retail[0]) {
                    return bad("all hours must share one price");
                }
            }
            TariffKind::Double => {
                let (day, night) = (retail[12], retail[0]);
                let shaped = (0..HOURS).all(|h| retail[h] == if is_day_hour(h) { day } else { night });
                if !shaped || day == night {
                    return bad("needs one day price and a different night price");
                }
            }
            TariffKind::Dynamic => {}
        }
        let floor = retail.iter().copied().fold(f64::INFINITY, f64::min);
        if buyback > floor {
            return bad("buyback price above the cheapest retail hour");
        }
        Ok(TariffSchedule { kind, retail, buyback })
    }

    pub fn flat(price: f64, buyback: f64) -> Result<Self> {
        Self::new(TariffKind::Flat, [price; HOURS], buyback)
    }

    pub fn double(day: f64, night: f64, buyback: f64) -> Result<Self> {
        let mut retail = [night; HOURS];
        for (h, p) in retail.iter_mut().enumerate() {
            if is_day_hour(h) {
                *p = day;
            }
        }
        Self::new(TariffKind::Double, retail, buyback)
    }

    /// Retail price = `wholesale[h] + fee`.
    pub fn dynamic(wholesale: &[f64; HOURS], fee: f64, buyback: f64) -> Result<Self> {
        let mut retail = *wholesale;
        for p in &mut retail {
            *p += fee;
        }
        Self::new(TariffKind::Dynamic, retail, buyback)
    }

    pub fn kind(&self) -> TariffKind {
        self.kind
    }

    /// λus at `hour`.
    pub fn retail(&self, hour: usize) -> f64 {
        self.retail[hour]
    }

    pub fn retail_series(&self) -> &[f64; HOURS] {
        &self.retail
    }

    /// λub.
    pub fn buyback(&self) -> f64 {
        self.buyback
    }
}

/// One schedule per tariff kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Tariffs {
    pub dynamic: TariffSchedule,
    pub double: TariffSchedule,
    pub flat: TariffSchedule,
}

impl Tariffs {
    /// Default flat and double contracts around a dynamic wholesale series.
    pub fn with_wholesale(wholesale: &[f64; HOURS]) -> Result<Self> {
        Ok(Tariffs {
            dynamic: TariffSchedule::dynamic(wholesale, DYNAMIC_FEE, BUYBACK_PRICE)?,
            double: TariffSchedule::double(DOUBLE_DAY_PRICE, DOUBLE_NIGHT_PRICE, BUYBACK_PRICE)?,
            flat: TariffSchedule::flat(FLAT_PRICE, BUYBACK_PRICE)?,
        })
    }

    pub fn get(&self, kind: TariffKind) -> &TariffSchedule {
        match kind {
            TariffKind::Dynamic => &self.dynamic,
            TariffKind::Double => &self.double,
            TariffKind::Flat => &self.flat,
        }
    }

    /// Each schedule must be of its own kind.
    pub fn validate(&self) -> Result<()> {
        for kind in TariffKind::ALL {
            let s = self.get(kind);
            if s.kind != kind {
                return Err(Error::InvalidScenario(format!("{} slot holds a {} tariff", kind.name(), s.kind.name())));
            }
            TariffSchedule::new(s.kind, s.retail, s.buyback)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_respect_buyback() {
        let t = Tariffs::with_wholesale(&[0.1; HOURS]).unwrap();
        assert!((t.dynamic.retail(3) - 0.175).abs() < 1e-12);
        assert_eq!(t.double.retail(6), DOUBLE_DAY_PRICE);
        assert_eq!(t.double.retail(21), DOUBLE_DAY_PRICE);
        assert_eq!(t.double.retail(22), DOUBLE_NIGHT_PRICE);
        assert_eq!(t.double.retail(5), DOUBLE_NIGHT_PRICE);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn shape_rules() {
        let mut r = [0.2; HOURS];
        r[3] = 0.21;
        assert!(TariffSchedule::new(TariffKind::Flat, r, 0.1).is_err());
        assert!(TariffSchedule::new(TariffKind::Dynamic, r, 0.1).is_ok());
        assert!(TariffSchedule::double(0.2, 0.2, 0.1).is_err());
        assert!(TariffSchedule::new(TariffKind::Double, r, 0.1).is_err());
        // Buyback above a cheap dynamic hour would let a peer buy low and sell back high.
        let mut w = [0.1; HOURS];
        w[4] = 0.05;
        assert!(TariffSchedule::dynamic(&w, 0.075, 0.1417).is_err());
        assert!(TariffSchedule::flat(-0.1, 0.0).is_err());
    }
}
