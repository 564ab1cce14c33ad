//! Origin demand profiles: piecewise-linear base demand, additive Gaussian
//! perturbation and third-order Butterworth low-pass smoothing.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigResult};
use crate::model::Demands;
use crate::params::NUM_CLASSES;
use crate::topology::NUM_LINKS;

/// Third-order low-pass Butterworth filter from the bilinear transform,
/// run in transposed direct form II.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth3 {
    b: [f64; 4],
    a: [f64; 4],
    state: [f64; 3],
}

impl Butterworth3 {
    /// `cutoff` is a fraction of the Nyquist frequency, strictly inside (0, 1).
    pub fn new(cutoff: f64) -> ConfigResult<Self> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "filter cutoff must lie strictly between 0 and 1 of Nyquist, got {cutoff}"
            )));
        }
        let k = (std::f64::consts::PI * cutoff / 2.0).tan();
        // First-order section K/(s + K) and second-order K²/(s² + K s + K²)
        // (the pole pair at ±60° for order three), each mapped with s = (1 − z⁻¹)/(1 + z⁻¹).
        let n1 = 1.0 + k;
        let first_b = [k / n1, k / n1];
        let first_a = [1.0, (k - 1.0) / n1];
        let n2 = 1.0 + k + k * k;
        let g = k * k / n2;
        let second_b = [g, 2.0 * g, g];
        let second_a = [1.0, 2.0 * (k * k - 1.0) / n2, (1.0 - k + k * k) / n2];
        Ok(Self {
            b: poly_mul(first_b, second_b),
            a: poly_mul(first_a, second_a),
            state: [0.0; 3],
        })
    }

    pub fn coefficients(&self) -> (&[f64; 4], &[f64; 4]) {
        (&self.b, &self.a)
    }

    /// Sets the internal state to the steady state for a constant input `x0`.
    pub fn settle(&mut self, x0: f64) {
        let (b, a) = (&self.b, &self.a);
        let z3 = (b[3] - a[3]) * x0;
        let z2 = (b[2] - a[2]) * x0 + z3;
        let z1 = (b[1] - a[1]) * x0 + z2;
        self.state = [z1, z2, z3];
    }

    pub fn filter(&mut self, x: f64) -> f64 {
        let (b, a) = (&self.b, &self.a);
        let y = b[0] * x + self.state[0];
        self.state[0] = b[1] * x - a[1] * y + self.state[1];
        self.state[1] = b[2] * x - a[2] * y + self.state[2];
        self.state[2] = b[3] * x - a[3] * y;
        y
    }
}

fn poly_mul(p: [f64; 2], q: [f64; 3]) -> [f64; 4] {
    [
        p[0] * q[0],
        p[0] * q[1] + p[1] * q[0],
        p[0] * q[2] + p[1] * q[1],
        p[1] * q[2],
    ]
}

/// Base demand of one origin as `[hour, veh/h]` breakpoints per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginDemand {
    pub c1: Vec<[f64; 2]>,
    pub c2: Vec<[f64; 2]>,
    /// Standard deviation of the additive perturbation (veh/h).
    pub std: f64,
}

fn interpolate(points: &[[f64; 2]], hour: f64) -> f64 {
    match points {
        [] => 0.0,
        [only] => only[1],
        _ => {
            if hour <= points[0][0] {
                return points[0][1];
            }
            for w in points.windows(2) {
                let ([t0, v0], [t1, v1]) = (w[0], w[1]);
                if hour <= t1 {
                    if t1 <= t0 {
                        return v1;
                    }
                    return v0 + (v1 - v0) * (hour - t0) / (t1 - t0);
                }
            }
            points[points.len() - 1][1]
        }
    }
}

impl OriginDemand {
    /// Low until 1.5 h, ramping over half an hour to a two-hour peak that
    /// spans the weather change, then back down by 4.5 h.
    fn trapezoid(low: f64, high: f64, share: PerClassShare, std: f64) -> Self {
        let shape = |scale: f64| {
            vec![
                [0.0, low * scale],
                [1.5, low * scale],
                [2.0, high * scale],
                [4.0, high * scale],
                [4.5, low * scale],
                [5.5, low * scale],
            ]
        };
        Self {
            c1: shape(share.0),
            c2: shape(share.1),
            std,
        }
    }

    pub fn base(&self, hour: f64) -> [f64; NUM_CLASSES] {
        [
            interpolate(&self.c1, hour).max(0.0),
            interpolate(&self.c2, hour).max(0.0),
        ]
    }

    fn validate(&self, name: &str) -> ConfigResult<()> {
        for (class, pts) in [("c1", &self.c1), ("c2", &self.c2)] {
            if pts.is_empty() {
                return Err(ConfigError::Invalid(format!(
                    "demand.{name}.{class} has no breakpoints"
                )));
            }
            if pts.windows(2).any(|w| w[1][0] < w[0][0]) {
                return Err(ConfigError::Invalid(format!(
                    "demand.{name}.{class}: breakpoint hours must not decrease"
                )));
            }
            if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite() || p[1] < 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "demand.{name}.{class}: demand must be finite and non-negative"
                )));
            }
        }
        if !(self.std.is_finite() && self.std >= 0.0) {
            return Err(ConfigError::Invalid(format!("demand.{name}.std must be non-negative")));
        }
        Ok(())
    }
}

struct PerClassShare(f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandProfile {
    /// Low-pass cutoff as a fraction of the Nyquist frequency.
    pub cutoff: f64,
    pub mainstream: OriginDemand,
    pub primary_ramp: OriginDemand,
    pub secondary_ramp: OriginDemand,
}

impl Default for DemandProfile {
    fn default() -> Self {
        let ramp = OriginDemand::trapezoid(200.0, 800.0, PerClassShare(0.9, 0.1), 30.0);
        Self {
            cutoff: 0.02,
            mainstream: OriginDemand::trapezoid(1000.0, 3400.0, PerClassShare(1.0, 0.15), 75.0),
            primary_ramp: ramp.clone(),
            secondary_ramp: ramp,
        }
    }
}

impl DemandProfile {
    pub fn origins(&self) -> [&OriginDemand; NUM_LINKS] {
        [&self.mainstream, &self.primary_ramp, &self.secondary_ramp]
    }

    /// Same profile with every demand multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for o in [&mut out.mainstream, &mut out.primary_ramp, &mut out.secondary_ramp] {
            o.c1.iter_mut().chain(o.c2.iter_mut()).for_each(|p| p[1] *= factor);
        }
        out
    }

    pub fn validate(&self) -> ConfigResult<()> {
        Butterworth3::new(self.cutoff)?;
        self.mainstream.validate("mainstream")?;
        self.primary_ramp.validate("primary_ramp")?;
        self.secondary_ramp.validate("secondary_ramp")
    }
}

/// Per-step demands for `steps` steps of `step_s` seconds: base demand plus
/// i.i.d. Gaussian noise, low-pass filtered per origin and class, clamped at 0.
pub fn synthesize_demand<R: Rng + ?Sized>(
    profile: &DemandProfile,
    steps: usize,
    step_s: f64,
    rng: &mut R,
) -> ConfigResult<Vec<Demands>> {
    let template = Butterworth3::new(profile.cutoff)?;
    let origins = profile.origins();
    let mut filters: [[Butterworth3; NUM_CLASSES]; NUM_LINKS] =
        std::array::from_fn(|_| std::array::from_fn(|_| template.clone()));
    let noise: [Option<Normal<f64>>; NUM_LINKS] = std::array::from_fn(|o| {
        (origins[o].std > 0.0).then(|| Normal::new(0.0, origins[o].std).expect("validated std"))
    });

    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let hour = k as f64 * step_s / 3600.0;
        let mut d: Demands = [[0.0; NUM_CLASSES]; NUM_LINKS];
        for o in 0..NUM_LINKS {
            let base = origins[o].base(hour);
            for c in 0..NUM_CLASSES {
                let x = base[c] + noise[o].as_ref().map_or(0.0, |n| n.sample(rng));
                if k == 0 {
                    filters[o][c].settle(base[c]);
                }
                d[o][c] = filters[o][c].filter(x).max(0.0);
            }
        }
        out.push(d);
    }
    Ok(out)
}
