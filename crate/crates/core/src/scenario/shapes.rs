use alloc::format;

use super::tariff::HOURS;
use crate::error::{Error, Result};

/// Household load: a morning hump at 07:00, a daytime plateau near 70% of
/// the peak (home working, appliances) and the 17:00–20:00 evening peak.
pub const DEFAULT_CONSUMPTION: [f64; HOURS] = [
    0.294, 0.255, 0.235, 0.235, 0.255, 0.333, 0.539, 0.800, 0.780, 0.767, 0.667, 0.667, //
    0.733, 0.700, 0.633, 0.633, 0.733, 1.000, 0.784, 0.980, 0.941, 0.784, 0.569, 0.392,
];

/// Rooftop PV: `sin` over 07:00–20:00 sampled at mid-hour, clipped at zero.
pub const DEFAULT_PV: [f64; HOURS] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.120537, 0.354605, 0.568065, 0.748511, 0.885456, //
    0.970942, 1.0, 0.970942, 0.885456, 0.748511, 0.568065, 0.354605, 0.120537, 0.0, 0.0, 0.0, 0.0,
];

/// Hourly consumption and PV shapes, each scaled to a unit peak.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileShapes {
    consumption: [f64; HOURS],
    pv: [f64; HOURS],
}

impl Default for ProfileShapes {
    fn default() -> Self {
        ProfileShapes {
            consumption: DEFAULT_CONSUMPTION,
            pv: DEFAULT_PV,
        }
    }
}

impl ProfileShapes {
    /// Rescales both series to a unit peak. A PV series may be all zero.
    pub fn new(consumption: [f64; HOURS], pv: [f64; HOURS]) -> Result<Self> {
        Ok(ProfileShapes {
            consumption: normalize("consumption", consumption, false)?,
            pv: normalize("pv", pv, true)?,
        })
    }

    pub fn consumption(&self) -> &[f64; HOURS] {
        &self.consumption
    }

    pub fn pv(&self) -> &[f64; HOURS] {
        &self.pv
    }
}

fn normalize(name: &str, mut s: [f64; HOURS], zero_ok: bool) -> Result<[f64; HOURS]> {
    if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidScenario(format!("{name} shape must be finite and nonnegative")));
    }
    let peak = s.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return if zero_ok {
            Ok(s)
        } else {
            Err(Error::InvalidScenario(format!("{name} shape is all zero")))
        };
    }
    for v in &mut s {
        *v /= peak;
    }
    Ok(s)
}
