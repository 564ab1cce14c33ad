//! Scenario configuration: a sectioned `key = value` file (TOML syntax) in
//! which every section and key is optional and falls back to the built-in
//! defaults. Unknown sections or keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use adaptune_rl::{ActionBounds, AgentConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controllers::ControllerParams;
use crate::demand::DemandProfile;
use crate::error::{ConfigError, ConfigResult};
use crate::params::ModelParams;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    /// Route-guidance update period (s).
    pub dta_s: f64,
    /// Ramp-metering update periods of the primary and secondary on-ramp (s).
    pub rm_s: [f64; 2],
    /// Tuning period of the RL layer (s).
    pub rl_s: f64,
    pub episode_s: f64,
    /// Time at which the weather turns bad (s).
    pub weather_switch_s: f64,
    /// Time from which observation noise is applied (s).
    pub noise_start_s: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            dta_s: 300.0,
            rm_s: [60.0, 60.0],
            rl_s: 1800.0,
            episode_s: 19_800.0,
            weather_switch_s: 9_960.0,
            noise_start_s: 1_800.0,
        }
    }
}

/// A timing configuration resolved to whole simulation steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepTiming {
    pub dta: usize,
    pub rm: [usize; 2],
    /// Steps per tuning interval.
    pub rl: usize,
    pub episode: usize,
    pub weather_switch: usize,
    pub noise_start: usize,
}

impl StepTiming {
    pub fn intervals(&self) -> usize {
        self.episode / self.rl
    }
}

fn whole_steps(name: &str, seconds: f64, step_s: f64) -> ConfigResult<usize> {
    let n = seconds / step_s;
    if !(n.is_finite() && n >= 0.0 && (n - n.round()).abs() < 1e-9) {
        return Err(ConfigError::Invalid(format!(
            "timing.{name} = {seconds} s is not a whole number of {step_s} s steps"
        )));
    }
    Ok(n.round() as usize)
}

impl TimingConfig {
    pub fn resolve(&self, step_s: f64) -> ConfigResult<StepTiming> {
        let t = StepTiming {
            dta: whole_steps("dta_s", self.dta_s, step_s)?,
            rm: [
                whole_steps("rm_s", self.rm_s[0], step_s)?,
                whole_steps("rm_s", self.rm_s[1], step_s)?,
            ],
            rl: whole_steps("rl_s", self.rl_s, step_s)?,
            episode: whole_steps("episode_s", self.episode_s, step_s)?,
            weather_switch: whole_steps("weather_switch_s", self.weather_switch_s, step_s)?,
            noise_start: whole_steps("noise_start_s", self.noise_start_s, step_s)?,
        };
        if t.dta == 0 || t.rm.contains(&0) || t.rl == 0 || t.episode == 0 {
            return Err(ConfigError::Invalid(
                "timing: periods must span at least one step".into(),
            ));
        }
        for (name, p) in [("dta_s", t.dta), ("rm_s", t.rm[0]), ("rm_s", t.rm[1])] {
            if t.rl % p != 0 {
                return Err(ConfigError::Invalid(format!(
                    "timing.rl_s must be a multiple of timing.{name}"
                )));
            }
        }
        if t.episode % t.rl != 0 {
            return Err(ConfigError::Invalid(
                "timing.episode_s must be a multiple of timing.rl_s".into(),
            ));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Weight on TTS (1/(veh·h)).
    pub w_tts: f64,
    /// Weight on squared control changes.
    pub w_u: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_tts: 3.33e-4,
            w_u: 2.22e-5,
        }
    }
}

/// Divisors applied to each observation feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationScales {
    pub demand: f64,
    pub queue: f64,
    pub density: f64,
    pub tts_difference: f64,
    pub control: f64,
    pub weather: f64,
}

impl Default for ObservationScales {
    fn default() -> Self {
        Self {
            demand: 2000.0,
            queue: 100.0,
            density: 180.0,
            tts_difference: 10.0,
            control: 1.0,
            weather: 1.0,
        }
    }
}

/// Admissible range `[lo, hi]` of every tunable controller parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionRanges {
    pub k_p: [f64; 2],
    pub k_i: [f64; 2],
    pub rho_bar: [f64; 2],
    pub k_r: [f64; 2],
    pub k_a: [f64; 2],
}

impl Default for ActionRanges {
    fn default() -> Self {
        Self {
            k_p: [0.0, 0.5],
            k_i: [0.0, 0.1],
            rho_bar: [15.0, 50.0],
            k_r: [0.0, 0.05],
            k_a: [0.0, 0.1],
        }
    }
}

impl ActionRanges {
    pub fn dta(&self) -> ActionBounds {
        bounds(&[self.k_p, self.k_i])
    }

    pub fn rm(&self) -> ActionBounds {
        bounds(&[self.rho_bar, self.k_r, self.k_a])
    }

    /// Joint bounds in the order `[K_P, K_I, ρ̄₁, K_R,1, K_A,1, ρ̄₂, K_R,2, K_A,2]`.
    pub fn joint(&self) -> ActionBounds {
        bounds(&[
            self.k_p,
            self.k_i,
            self.rho_bar,
            self.k_r,
            self.k_a,
            self.rho_bar,
            self.k_r,
            self.k_a,
        ])
    }
}

fn bounds(ranges: &[[f64; 2]]) -> ActionBounds {
    ActionBounds::new(
        ranges.iter().map(|r| r[0]).collect(),
        ranges.iter().map(|r| r[1]).collect(),
    )
    .expect("ranges are validated with the configuration")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub target_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub noise_std: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    pub actor_output_scale: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        let base = AgentConfig::new(1, ActionBounds::new(vec![0.0], vec![1.0]).unwrap());
        Self {
            hidden: base.hidden,
            gamma: base.gamma,
            actor_lr: base.actor_lr,
            critic_lr: base.critic_lr,
            target_rate: base.target_rate,
            batch_size: base.batch_size,
            buffer_capacity: base.buffer_capacity,
            noise_std: base.noise_std,
            noise_decay: base.noise_decay,
            noise_floor: base.noise_floor,
            actor_output_scale: base.actor_output_scale,
        }
    }
}

impl DdpgConfig {
    pub fn agent_config(&self, obs_dim: usize, bounds: ActionBounds) -> AgentConfig {
        AgentConfig {
            obs_dim,
            bounds,
            hidden: self.hidden.clone(),
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            target_rate: self.target_rate,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            noise_std: self.noise_std,
            noise_decay: self.noise_decay,
            noise_floor: self.noise_floor,
            actor_output_scale: self.actor_output_scale,
        }
    }

    fn validate(&self) -> ConfigResult<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("ddpg.{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("target_rate", self.target_rate)?;
        unit("noise_decay", self.noise_decay)?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ConfigError::Invalid(
                "ddpg.hidden needs at least one non-empty layer".into(),
            ));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(ConfigError::Invalid(
                "ddpg.batch_size must be positive and no larger than ddpg.buffer_capacity".into(),
            ));
        }
        let pos = [self.actor_lr, self.critic_lr, self.actor_output_scale];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ConfigError::Invalid(
                "ddpg learning rates and output scale must be positive".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_floor >= 0.0 && self.noise_std.is_finite()) {
            return Err(ConfigError::Invalid(
                "ddpg exploration noise must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Experiment sizes used when the command line does not override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub episodes: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    /// Runs per trained agent when choosing the representative agent.
    pub selection_runs: usize,
    /// Runs per trained agent and noise level in the robustness sweep.
    pub robustness_runs: usize,
    pub sigmas: Vec<f64>,
    /// Window of the learning-curve moving average.
    pub smoothing_window: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            runs: 5,
            seeds: vec![1, 2],
            selection_runs: 3,
            robustness_runs: 10,
            sigmas: vec![0.0, 25.0, 50.0, 75.0, 100.0],
            smoothing_window: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelParams,
    pub topology: Topology,
    pub timing: TimingConfig,
    pub reward: RewardConfig,
    pub observation: ObservationScales,
    pub actions: ActionRanges,
    pub ddpg: DdpgConfig,
    pub demand: DemandProfile,
    /// Controller parameters of the fixed-parameter strategy.
    pub fixed: ControllerParams,
    pub bench: BenchConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> ConfigResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn steps(&self) -> StepTiming {
        self.timing
            .resolve(self.model.step_s)
            .expect("timing is validated with the configuration")
    }

    pub fn validate(&self) -> ConfigResult<()> {
        self.model.validate()?;
        self.topology.validate()?;
        self.timing.resolve(self.model.step_s)?;
        self.demand.validate()?;
        self.ddpg.validate()?;
        let r = &self.reward;
        if !(r.w_tts.is_finite() && r.w_tts >= 0.0 && r.w_u.is_finite() && r.w_u >= 0.0) {
            return Err(ConfigError::Invalid("reward weights must be non-negative".into()));
        }
        let o = &self.observation;
        if [o.demand, o.queue, o.density, o.tts_difference, o.control, o.weather]
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(ConfigError::Invalid("observation scales must be positive".into()));
        }
        let a = &self.actions;
        for (name, [lo, hi]) in [
            ("k_p", a.k_p),
            ("k_i", a.k_i),
            ("rho_bar", a.rho_bar),
            ("k_r", a.k_r),
            ("k_a", a.k_a),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ConfigError::Invalid(format!("actions.{name} needs lo < hi")));
            }
        }
        let f = &self.fixed;
        let gains = [f.dta.k_p, f.dta.k_i, f.rm[0].k_r, f.rm[0].k_a, f.rm[1].k_r, f.rm[1].k_a];
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(ConfigError::Invalid(
                "fixed controller gains must be non-negative".into(),
            ));
        }
        let b = &self.bench;
        if b.smoothing_window == 0 {
            return Err(ConfigError::Invalid("bench.smoothing_window must be at least 1".into()));
        }
        if b.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ConfigError::Invalid("bench.sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let t = cfg.steps();
        assert_eq!((t.dta, t.rm, t.rl, t.episode), (30, [6, 6], 180, 1980));
        assert_eq!(t.intervals(), 11);
        assert_eq!(t.weather_switch, 996);
    }

    #[test]
    fn overrides_and_round_trip() {
        let cfg = ScenarioConfig::from_toml_str(
            "[reward]\nw_tts = 0.5\n\n[bench]\nseeds = [3, 4, 5]\n\n[model.good]\nrho_cr = [40.0, 32.65]\nv_free = [110.0, 86.5]\ntau = 20.0\n",
        )
        .unwrap();
        assert_eq!(cfg.reward.w_tts, 0.5);
        assert_eq!(cfg.reward.w_u, 2.22e-5);
        assert_eq!(cfg.bench.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.model.good.tau, 20.0);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(cfg.hash(), ScenarioConfig::default().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("[reward]\nw_ttx = 1.0\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("[rewards]\nw_tts = 1.0\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[timing]\ndta_s = 305.0\n",
            "[timing]\nrl_s = 1500.0\n",
            "[reward]\nw_u = -1.0\n",
            "[demand]\ncutoff = 1.5\n",
            "[observation]\nqueue = 0.0\n",
            "[actions]\nk_p = [0.5, 0.0]\n",
            "[ddpg]\nbatch_size = 0\n",
        ] {
            assert!(
                matches!(ScenarioConfig::from_toml_str(text), Err(ConfigError::Invalid(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn action_bounds_layout() {
        let a = ActionRanges::default();
        assert_eq!(a.dta().hi(), &[0.5, 0.1]);
        assert_eq!(a.rm().lo(), &[15.0, 0.0, 0.0]);
        assert_eq!(a.joint().dim(), 8);
        assert_eq!(a.joint().hi()[5], 50.0);
    }
}
