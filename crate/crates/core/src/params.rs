//! Model parameters of the two-class METANET network.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigResult};

pub const NUM_CLASSES: usize = 2;

/// Per-class quantities indexed by vehicle class (c1 = 0, c2 = 1).
pub type PerClass = [f64; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weather {
    Good = 0,
    Bad = 1,
}

impl Weather {
    pub fn indicator(self) -> f64 {
        self as u8 as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleClassParams {
    /// Critical density (veh/km/lane).
    pub rho_cr: f64,
    /// Free-flow speed (km/h).
    pub v_free: f64,
    /// Fundamental-diagram exponent.
    pub a_m: f64,
    /// Passenger-car equivalent used in the effective density.
    pub pce: f64,
}

/// Weather-dependent part of the model: per-class fundamental diagram
/// parameters and the relaxation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherParams {
    pub rho_cr: PerClass,
    pub v_free: PerClass,
    /// Relaxation time (s).
    pub tau: f64,
}

impl WeatherParams {
    pub fn good() -> Self {
        Self {
            rho_cr: [40.0, 32.65],
            v_free: [110.0, 86.5],
            tau: 18.0,
        }
    }

    pub fn bad() -> Self {
        Self {
            rho_cr: [24.0, 16.65],
            v_free: [92.0, 61.4],
            tau: 21.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub good: WeatherParams,
    pub bad: WeatherParams,
    /// Fundamental-diagram exponent per class.
    pub a_m: PerClass,
    pub pce: PerClass,
    /// Anticipation coefficient (km²/h).
    pub nu: f64,
    /// Anticipation damping density (veh/km/lane).
    pub chi: f64,
    /// Merge speed-drop coefficient.
    pub delta: f64,
    /// Jam density (veh/km/lane).
    pub rho_max: f64,
    /// Mainstream origin capacity (veh/h/lane).
    pub c_main: f64,
    /// On-ramp capacity (veh/h/lane).
    pub c_onramp: f64,
    /// Segment length (m).
    pub segment_length_m: f64,
    /// Simulation step (s).
    pub step_s: f64,
    /// Speed floor (km/h).
    pub v_min: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let good = WeatherParams::good();
        Self {
            good,
            bad: WeatherParams::bad(),
            a_m: [1.8, 2.0],
            pce: [1.0, good.rho_cr[0] / good.rho_cr[1]],
            nu: 60.0,
            chi: 40.0,
            delta: 0.0122,
            rho_max: 180.0,
            c_main: 2000.0,
            c_onramp: 2000.0,
            segment_length_m: 1000.0,
            step_s: 10.0,
            v_min: 7.0,
        }
    }
}

impl ModelParams {
    pub fn weather(&self, w: Weather) -> &WeatherParams {
        match w {
            Weather::Good => &self.good,
            Weather::Bad => &self.bad,
        }
    }

    /// Class parameters and relaxation time (s) under weather `w`.
    pub fn weather_params(&self, w: Weather) -> ([VehicleClassParams; NUM_CLASSES], f64) {
        let wp = self.weather(w);
        let class = |c: usize| VehicleClassParams {
            rho_cr: wp.rho_cr[c],
            v_free: wp.v_free[c],
            a_m: self.a_m[c],
            pce: self.pce[c],
        };
        ([class(0), class(1)], wp.tau)
    }

    pub fn step_hours(&self) -> f64 {
        self.step_s / 3600.0
    }

    pub fn segment_length_km(&self) -> f64 {
        self.segment_length_m / 1000.0
    }

    pub fn validate(&self) -> ConfigResult<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("model.{name} must be positive, got {v}")))
            }
        };
        positive("step_s", self.step_s)?;
        positive("segment_length_m", self.segment_length_m)?;
        positive("v_min", self.v_min)?;
        positive("rho_max", self.rho_max)?;
        positive("c_main", self.c_main)?;
        positive("c_onramp", self.c_onramp)?;
        positive("chi", self.chi)?;
        if !(self.nu.is_finite() && self.nu >= 0.0 && self.delta.is_finite() && self.delta >= 0.0) {
            return Err(ConfigError::Invalid(
                "model.nu and model.delta must be non-negative".into(),
            ));
        }
        for c in 0..NUM_CLASSES {
            positive("a_m", self.a_m[c])?;
            if !(self.pce[c].is_finite() && self.pce[c] >= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "model.pce must be at least 1 for every class, got {}",
                    self.pce[c]
                )));
            }
        }
        for (label, wp) in [("good", &self.good), ("bad", &self.bad)] {
            positive("tau", wp.tau)?;
            for c in 0..NUM_CLASSES {
                positive("rho_cr", wp.rho_cr[c])?;
                positive("v_free", wp.v_free[c])?;
                if wp.rho_cr[c] >= self.rho_max {
                    return Err(ConfigError::Invalid(format!(
                        "model.{label}.rho_cr must stay below rho_max"
                    )));
                }
                if wp.v_free[c] < self.v_min {
                    return Err(ConfigError::Invalid(format!(
                        "model.{label}.v_free is below the speed floor"
                    )));
                }
                // Explicit scheme: a segment may not be emptied within one step.
                if wp.v_free[c] * self.step_hours() >= self.segment_length_km() {
                    return Err(ConfigError::Invalid(format!(
                        "model.{label}: v_free·T must be shorter than a segment"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_weather_values() {
        let p = ModelParams::default();
        let (classes, tau) = p.weather_params(Weather::Good);
        assert_eq!(classes[0].rho_cr, 40.0);
        assert_eq!(classes[0].v_free, 110.0);
        assert_eq!(classes[1].rho_cr, 32.65);
        assert_eq!(classes[1].v_free, 86.5);
        assert_eq!(tau, 18.0);
    }

    #[test]
    fn bad_weather_values() {
        let p = ModelParams::default();
        let (classes, tau) = p.weather_params(Weather::Bad);
        assert_eq!(classes[0].rho_cr, 24.0);
        assert_eq!(classes[0].v_free, 92.0);
        assert_eq!(classes[1].rho_cr, 16.65);
        assert_eq!(classes[1].v_free, 61.4);
        assert_eq!(tau, 21.6);
    }

    #[test]
    fn lookup_is_pure() {
        let p = ModelParams::default();
        let first = p.weather_params(Weather::Good);
        let _ = p.weather_params(Weather::Bad);
        assert_eq!(first, p.weather_params(Weather::Good));
    }

    #[test]
    fn weather_independent_parameters() {
        let p = ModelParams::default();
        assert_eq!(p.a_m, [1.8, 2.0]);
        assert_eq!((p.nu, p.chi, p.delta, p.rho_max), (60.0, 40.0, 0.0122, 180.0));
        assert_eq!(
            (p.c_main, p.c_onramp, p.segment_length_m, p.step_s),
            (2000.0, 2000.0, 1000.0, 10.0)
        );
        assert!((p.pce[1] - 1.2251).abs() < 1e-4);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_cfl_violation() {
        let p = ModelParams {
            step_s: 60.0,
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
    }
}
