//! The tuning environment: observations, the shared reward, observation
//! noise and the three-rate loop (simulation step, controller updates,
//! tuning intervals).

mod episode;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ObservationScales, RewardConfig, StepTiming};
use crate::model::{Controls, Demands};
use crate::params::{PerClass, Weather};

pub use episode::{run_episode, AgentSet, EpisodeOptions, EpisodeResult};
pub use train::{new_agents, train, train_with, TrainOutcome};

/// Features per agent in the decentralized framework.
pub const MULTI_OBS_DIM: usize = 8;
/// Features of the joint observation of the centralized framework.
pub const SINGLE_OBS_DIM: usize = 22;
/// Leading features of the route-guidance block that observation noise acts on.
pub const DTA_NOISY_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    NoControl,
    Fixed,
    Multi,
    Single,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::NoControl, Strategy::Fixed, Strategy::Multi, Strategy::Single];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoControl => "no_control",
            Strategy::Fixed => "fixed",
            Strategy::Multi => "multi",
            Strategy::Single => "single",
        }
    }

    pub fn framework(self) -> Option<Framework> {
        match self {
            Strategy::Multi => Some(Framework::Multi),
            Strategy::Single => Some(Framework::Single),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected no_control, fixed, multi or single)"))
    }
}

/// How the tuning layer is organised: three decentralized agents or one
/// agent acting on the joint observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Framework {
    Multi,
    Single,
}

impl Framework {
    pub fn strategy(self) -> Strategy {
        match self {
            Framework::Multi => Strategy::Multi,
            Framework::Single => Strategy::Single,
        }
    }

    pub fn name(self) -> &'static str {
        self.strategy().name()
    }

    pub fn num_agents(self) -> usize {
        match self {
            Framework::Multi => 3,
            Framework::Single => 1,
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi" => Ok(Framework::Multi),
            "single" => Ok(Framework::Single),
            _ => Err(format!("unknown framework `{s}` (expected multi or single)")),
        }
    }
}

pub fn weather_schedule(k: usize, timing: &StepTiming) -> Weather {
    if k >= timing.weather_switch {
        Weather::Bad
    } else {
        Weather::Good
    }
}

/// Raw quantities the agents observe at a tuning boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    /// Current demand per origin and class (veh/h).
    pub demand: Demands,
    /// Queue per origin and class (veh).
    pub queue: [PerClass; 3],
    /// Route TTS difference at the current and previous route-guidance update.
    pub dt: f64,
    pub dt_prev: f64,
    /// Bottleneck density per route at the current and previous metering update.
    pub rho_b: [f64; 2],
    pub rho_b_prev: [f64; 2],
    /// Control inputs currently applied.
    pub controls: Controls,
    pub weather: Weather,
}

impl Snapshot {
    /// Empty network at rest with the initial control inputs.
    pub fn idle(weather: Weather) -> Self {
        Self {
            demand: [[0.0; 2]; 3],
            queue: [[0.0; 2]; 3],
            dt: 0.0,
            dt_prev: 0.0,
            rho_b: [0.0; 2],
            rho_b_prev: [0.0; 2],
            controls: Controls::NO_CONTROL,
            weather,
        }
    }
}

/// Observation of agent `agent` (0 route guidance, 1 and 2 the ramp meters
/// of the primary and secondary route), before normalization.
pub fn build_obs_multi(agent: usize, s: &Snapshot) -> Vec<f64> {
    let mut o = Vec::with_capacity(MULTI_OBS_DIM);
    o.extend_from_slice(&s.demand[agent]);
    o.extend_from_slice(&s.queue[agent]);
    match agent {
        0 => o.extend([s.dt, s.dt_prev, s.controls.dta]),
        1 | 2 => {
            let r = agent - 1;
            o.extend([s.rho_b[r], s.rho_b_prev[r], s.controls.rm[r]]);
        }
        _ => panic!("agent index {agent} out of range"),
    }
    o.push(s.weather.indicator());
    o
}

/// The three agent observations without their weather entries, followed by
/// the weather indicator.
pub fn build_obs_single(s: &Snapshot) -> Vec<f64> {
    let mut o = Vec::with_capacity(SINGLE_OBS_DIM);
    for agent in 0..3 {
        let part = build_obs_multi(agent, s);
        o.extend_from_slice(&part[..MULTI_OBS_DIM - 1]);
    }
    o.push(s.weather.indicator());
    o
}

/// Per-feature divisors matching an observation layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub scales: Vec<f64>,
}

impl ObservationSpec {
    pub fn multi(agent: usize, sc: &ObservationScales) -> Self {
        let measurement = if agent == 0 { sc.tts_difference } else { sc.density };
        Self {
            scales: vec![
                sc.demand,
                sc.demand,
                sc.queue,
                sc.queue,
                measurement,
                measurement,
                sc.control,
                sc.weather,
            ],
        }
    }

    pub fn single(sc: &ObservationScales) -> Self {
        let mut scales = Vec::with_capacity(SINGLE_OBS_DIM);
        for agent in 0..3 {
            scales.extend_from_slice(&Self::multi(agent, sc).scales[..MULTI_OBS_DIM - 1]);
        }
        scales.push(sc.weather);
        Self { scales }
    }
}

pub fn normalize(o: &[f64], spec: &ObservationSpec) -> Vec<f64> {
    assert_eq!(
        o.len(),
        spec.scales.len(),
        "observation and scale vector differ in length"
    );
    o.iter().zip(&spec.scales).map(|(v, s)| v / s).collect()
}

/// Negative weighted TTS plus control-change penalty over one tuning
/// interval. `controls[i]` is applied during the step of `tts[i]`;
/// `before` is the input applied in the step preceding the slice.
pub fn compute_reward(tts: &[f64], controls: &[Controls], before: Controls, cfg: &RewardConfig) -> f64 {
    assert_eq!(tts.len(), controls.len(), "TTS and control slices differ in length");
    let mut prev = before;
    let mut cost = 0.0;
    for (&j, &u) in tts.iter().zip(controls) {
        cost += cfg.w_tts * j + cfg.w_u * u.squared_distance(prev);
        prev = u;
    }
    -cost
}

/// Multiplies each element by `η = 1 + clip(α, −100, 100)/100` with
/// `α ~ N(0, σ²)` once step `k` has reached `start`; identity before.
pub fn apply_obs_noise<R: Rng + ?Sized>(o: &[f64], sigma: f64, k: usize, start: usize, rng: &mut R) -> Vec<f64> {
    if k < start || sigma <= 0.0 {
        return o.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("noise level is finite and positive");
    o.iter().map(|&v| v * noise_factor(normal.sample(rng))).collect()
}

/// `η = 1 + clip(α, −100, 100)/100`.
pub fn noise_factor(alpha: f64) -> f64 {
    1.0 + alpha.clamp(-100.0, 100.0) / 100.0
}
