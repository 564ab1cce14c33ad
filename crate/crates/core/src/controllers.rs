//! Velocity-form PI laws for route guidance (PI-DTA) and ramp metering
//! (PI-ALINEA). Outputs are clamped to `[0, 1]` and the clamped value is what
//! the next update builds on.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub fn clamp_control(u: f64) -> f64 {
    u.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtaParams {
    pub k_p: f64,
    pub k_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmParams {
    /// Desired bottleneck density (veh/km/lane).
    pub rho_bar: f64,
    pub k_r: f64,
    pub k_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtaState {
    pub u_prev: f64,
    /// Route TTS difference seen at the previous update.
    pub dt_prev: f64,
}

impl Default for DtaState {
    fn default() -> Self {
        Self {
            u_prev: 0.5,
            dt_prev: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmState {
    pub u_prev: f64,
    pub rho_b_prev: f64,
}

impl RmState {
    /// Fully open meter; the first measurement doubles as its own predecessor.
    pub fn new(first_measurement: f64) -> Self {
        Self {
            u_prev: 1.0,
            rho_b_prev: first_measurement,
        }
    }
}

/// `u = u_prev + K_P·(Δt − Δt_prev) + K_I·Δt`, clamped.
pub fn pi_dta_update(s: DtaState, dt_now: f64, p: DtaParams) -> Result<(f64, DtaState), ModelError> {
    if !dt_now.is_finite() {
        return Err(ModelError::Measurement("route TTS difference"));
    }
    let raw = s.u_prev + p.k_p * (dt_now - s.dt_prev) + p.k_i * dt_now;
    let u = clamp_control(raw);
    Ok((
        u,
        DtaState {
            u_prev: u,
            dt_prev: dt_now,
        },
    ))
}

/// `u = u_prev + K_R·(ρ̄ − ρ_b) − K_A·(ρ_b − ρ_b,prev)`, clamped.
pub fn pi_alinea_update(s: RmState, rho_b: f64, p: RmParams) -> Result<(f64, RmState), ModelError> {
    if !rho_b.is_finite() {
        return Err(ModelError::Measurement("bottleneck density"));
    }
    let raw = s.u_prev + p.k_r * (p.rho_bar - rho_b) - p.k_a * (rho_b - s.rho_b_prev);
    let u = clamp_control(raw);
    Ok((
        u,
        RmState {
            u_prev: u,
            rho_b_prev: rho_b,
        },
    ))
}

/// Parameter vectors of all three controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub dta: DtaParams,
    pub rm: [RmParams; 2],
}

impl ControllerParams {
    /// Hand-tuned reference values used by the fixed-parameter strategy.
    pub fn fixed() -> Self {
        let rm = RmParams {
            rho_bar: 37.5,
            k_r: 0.005,
            k_a: 0.1,
        };
        Self {
            dta: DtaParams { k_p: 0.01, k_i: 0.005 },
            rm: [rm, rm],
        }
    }

    /// Flattened as `[K_P, K_I, ρ̄₁, K_R,1, K_A,1, ρ̄₂, K_R,2, K_A,2]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.dta.k_p, self.dta.k_i];
        for rm in &self.rm {
            v.extend([rm.rho_bar, rm.k_r, rm.k_a]);
        }
        v
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self::fixed()
    }
}
