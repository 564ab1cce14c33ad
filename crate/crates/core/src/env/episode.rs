use adaptune_rl::{Agent, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    apply_obs_noise, build_obs_multi, build_obs_single, compute_reward, normalize, weather_schedule, ObservationSpec,
    Snapshot, Strategy, DTA_NOISY_DIM, MULTI_OBS_DIM, SINGLE_OBS_DIM,
};
use crate::config::ScenarioConfig;
use crate::controllers::{pi_alinea_update, pi_dta_update, ControllerParams, DtaState, RmParams, RmState};
use crate::demand::synthesize_demand;
use crate::error::{Error, Result};
use crate::model::{bottleneck_density, compute_step_tts, route_tts_difference, step_network, Controls, NetworkState};
use crate::params::Weather;
use crate::topology::Route;

/// Agents driving the tuning layer of an episode.
pub enum AgentSet<'a> {
    None,
    /// Greedy actions, nothing stored or learned.
    Frozen(&'a [Agent]),
    /// Exploration noise on every action, transitions stored and one
    /// learning step per stored transition.
    Learning(&'a mut [Agent]),
}

impl AgentSet<'_> {
    fn agents(&self) -> &[Agent] {
        match self {
            AgentSet::None => &[],
            AgentSet::Frozen(a) => a,
            AgentSet::Learning(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    /// Seed of the demand perturbation stream.
    pub demand_seed: u64,
    /// Seed of the observation noise stream.
    pub noise_seed: u64,
    /// Standard deviation of the observation noise on the route-guidance
    /// features (0 disables it).
    pub sigma: f64,
}

impl EpisodeOptions {
    pub fn new(demand_seed: u64) -> Self {
        Self {
            demand_seed,
            noise_seed: 0,
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// TTS accrued in every step (veh·h).
    pub tts: Vec<f64>,
    pub u_dta: Vec<f64>,
    pub u_rm1: Vec<f64>,
    pub u_rm2: Vec<f64>,
    /// Shared reward of every tuning interval.
    pub rewards: Vec<f64>,
    pub total_tts: f64,
    /// Sum over steps of the squared control change.
    pub control_variation: f64,
    /// Controller parameters in force during each tuning interval.
    pub params: Vec<ControllerParams>,
    /// Scaled action of every agent at every tuning interval.
    pub actions: Vec<Vec<Vec<f64>>>,
}

impl EpisodeResult {
    pub fn controls(&self, k: usize) -> Controls {
        Controls {
            dta: self.u_dta[k],
            rm: [self.u_rm1[k], self.u_rm2[k]],
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

fn check_agents(strategy: Strategy, agents: &[Agent]) -> Result<()> {
    let expected: &[(usize, usize)] = match strategy {
        Strategy::NoControl | Strategy::Fixed => &[],
        Strategy::Multi => &[(MULTI_OBS_DIM, 2), (MULTI_OBS_DIM, 3), (MULTI_OBS_DIM, 3)],
        Strategy::Single => &[(SINGLE_OBS_DIM, 8)],
    };
    let got: Vec<(usize, usize)> = agents.iter().map(|a| (a.obs_dim(), a.action_dim())).collect();
    if got != expected {
        return Err(Error::Usage(format!(
            "strategy {strategy} needs agents with (observation, action) dimensions {expected:?}, got {got:?}"
        )));
    }
    Ok(())
}

struct Observer {
    strategy: Strategy,
    specs: Vec<ObservationSpec>,
    sigma: f64,
    noise_start: usize,
    rng: ChaCha8Rng,
}

impl Observer {
    /// Normalized observation of every agent, with noise on the
    /// route-guidance block.
    fn observe(&mut self, s: &Snapshot, k: usize) -> Vec<Vec<f64>> {
        let mut obs: Vec<Vec<f64>> = match self.strategy {
            Strategy::Multi => (0..3)
                .map(|i| normalize(&build_obs_multi(i, s), &self.specs[i]))
                .collect(),
            Strategy::Single => vec![normalize(&build_obs_single(s), &self.specs[0])],
            _ => return Vec::new(),
        };
        let block = &mut obs[0][..DTA_NOISY_DIM];
        let noisy = apply_obs_noise(block, self.sigma, k, self.noise_start, &mut self.rng);
        block.copy_from_slice(&noisy);
        obs
    }
}

fn apply_actions(strategy: Strategy, scaled: &[Vec<f64>], p: &mut ControllerParams) {
    let rm = |a: &[f64]| RmParams {
        rho_bar: a[0],
        k_r: a[1],
        k_a: a[2],
    };
    match strategy {
        Strategy::Multi => {
            p.dta.k_p = scaled[0][0];
            p.dta.k_i = scaled[0][1];
            p.rm = [rm(&scaled[1]), rm(&scaled[2])];
        }
        Strategy::Single => {
            let a = &scaled[0];
            p.dta.k_p = a[0];
            p.dta.k_i = a[1];
            p.rm = [rm(&a[2..5]), rm(&a[5..8])];
        }
        _ => {}
    }
}

/// Simulates one episode under `strategy`.
///
/// Step `k` proceeds as: measure; at a tuning boundary let the agents
/// observe and overwrite the controller parameters; update every
/// controller whose period divides `k`; accrue the TTS of `x(k)`; advance
/// the network with the resulting inputs.
pub fn run_episode(
    cfg: &ScenarioConfig,
    strategy: Strategy,
    mut agents: AgentSet<'_>,
    opts: EpisodeOptions,
) -> Result<EpisodeResult> {
    check_agents(strategy, agents.agents())?;
    if !(opts.sigma.is_finite() && opts.sigma >= 0.0) {
        return Err(Error::Usage(format!(
            "noise level must be non-negative, got {}",
            opts.sigma
        )));
    }
    let t = cfg.steps();
    let (topo, model) = (&cfg.topology, &cfg.model);
    let demand = synthesize_demand(
        &cfg.demand,
        t.episode,
        model.step_s,
        &mut ChaCha8Rng::seed_from_u64(opts.demand_seed),
    )?;
    let tuned = matches!(strategy, Strategy::Multi | Strategy::Single);
    let controlled = strategy != Strategy::NoControl;
    let mut observer = Observer {
        strategy,
        specs: match strategy {
            Strategy::Multi => (0..3).map(|i| ObservationSpec::multi(i, &cfg.observation)).collect(),
            _ => vec![ObservationSpec::single(&cfg.observation)],
        },
        sigma: opts.sigma,
        noise_start: t.noise_start,
        rng: ChaCha8Rng::seed_from_u64(opts.noise_seed),
    };

    let mut x = NetworkState::empty(topo, model, Weather::Good);
    let mut params = cfg.fixed;
    let mut u = Controls::NO_CONTROL;
    let mut dta = DtaState::default();
    let mut rm = Route::BOTH.map(|r| RmState::new(bottleneck_density(&x, r, topo, model)));

    let n_agents = agents.agents().len();
    let intervals = t.intervals();
    let mut out = EpisodeResult {
        tts: Vec::with_capacity(t.episode),
        u_dta: Vec::with_capacity(t.episode),
        u_rm1: Vec::with_capacity(t.episode),
        u_rm2: Vec::with_capacity(t.episode),
        rewards: Vec::with_capacity(intervals),
        total_tts: 0.0,
        control_variation: 0.0,
        params: Vec::with_capacity(intervals),
        actions: vec![Vec::with_capacity(intervals); n_agents],
    };
    let mut controls: Vec<Controls> = Vec::with_capacity(t.episode);
    // Observation and raw action of each agent for the open interval.
    let mut pending: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();

    let close_interval = |out: &mut EpisodeResult, controls: &[Controls], j: usize| {
        let (a, b) = (j * t.rl, (j + 1) * t.rl);
        let before = if a == 0 { Controls::NO_CONTROL } else { controls[a - 1] };
        let r = compute_reward(&out.tts[a..b], &controls[a..b], before, &cfg.reward);
        out.rewards.push(r);
        r
    };

    for k in 0..=t.episode {
        let boundary = k % t.rl == 0;
        let measure = boundary || (controlled && (k % t.dta == 0 || t.rm.iter().any(|p| k % p == 0)));
        let (dt_now, rho_now) = if measure {
            (
                route_tts_difference(&x, topo, model),
                Route::BOTH.map(|r| bottleneck_density(&x, r, topo, model)),
            )
        } else {
            (0.0, [0.0; 2])
        };
        let w = weather_schedule(k.min(t.episode - 1), &t);

        if boundary {
            let j = k / t.rl;
            let obs = if tuned {
                let snapshot = Snapshot {
                    demand: demand[k.min(t.episode - 1)],
                    queue: x.origins.map(|o| o.queue),
                    dt: dt_now,
                    dt_prev: dta.dt_prev,
                    rho_b: rho_now,
                    rho_b_prev: [rm[0].rho_b_prev, rm[1].rho_b_prev],
                    controls: u,
                    weather: w,
                };
                observer.observe(&snapshot, k)
            } else {
                Vec::new()
            };
            if j > 0 {
                let reward = close_interval(&mut out, &controls, j - 1);
                if let AgentSet::Learning(agents) = &mut agents {
                    let terminal = k == t.episode;
                    for (i, agent) in agents.iter_mut().enumerate() {
                        let (o, a) = std::mem::take(&mut pending[i]);
                        agent.remember(Transition {
                            obs: o,
                            action: a,
                            reward,
                            next_obs: obs[i].clone(),
                            terminal,
                        })?;
                        agent.learn()?;
                    }
                }
            }
            if k == t.episode {
                break;
            }
            if tuned {
                let mut scaled = Vec::with_capacity(n_agents);
                pending.clear();
                for (i, o) in obs.into_iter().enumerate() {
                    let (raw, s) = match &mut agents {
                        AgentSet::Learning(agents) => {
                            let (raw, _) = agents[i].act(&o)?;
                            let raw = agents[i].explore(&raw);
                            let s = agents[i].bounds().scale(&raw);
                            (raw, s)
                        }
                        AgentSet::Frozen(agents) => agents[i].act(&o)?,
                        AgentSet::None => unreachable!("agents were checked"),
                    };
                    out.actions[i].push(s.clone());
                    scaled.push(s);
                    pending.push((o, raw));
                }
                apply_actions(strategy, &scaled, &mut params);
            }
            out.params.push(params);
        }

        if controlled {
            if k % t.dta == 0 {
                let (v, s) = pi_dta_update(dta, dt_now, params.dta)?;
                u.dta = v;
                dta = s;
            }
            for r in 0..2 {
                if k % t.rm[r] == 0 {
                    let (v, s) = pi_alinea_update(rm[r], rho_now[r], params.rm[r])?;
                    u.rm[r] = v;
                    rm[r] = s;
                }
            }
        }

        let j_tts = compute_step_tts(&x, topo, model);
        out.tts.push(j_tts);
        out.total_tts += j_tts;
        out.control_variation += u.squared_distance(controls.last().copied().unwrap_or(Controls::NO_CONTROL));
        out.u_dta.push(u.dta);
        out.u_rm1.push(u.rm[0]);
        out.u_rm2.push(u.rm[1]);
        controls.push(u);

        let (next, _) = step_network(&x, u, &demand[k], w, topo, model)?;
        x = next;
    }
    Ok(out)
}
