use adaptune_rl::Agent;

use super::episode::{run_episode, AgentSet, EpisodeOptions};
use super::{Framework, MULTI_OBS_DIM, SINGLE_OBS_DIM};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Vec<Agent>,
    /// Total reward of every training episode.
    pub curve: Vec<f64>,
}

/// Freshly initialised agents of `framework`, each with its own seed.
pub fn new_agents(cfg: &ScenarioConfig, framework: Framework, seed: u64) -> Result<Vec<Agent>> {
    let specs = match framework {
        Framework::Multi => vec![
            (MULTI_OBS_DIM, cfg.actions.dta()),
            (MULTI_OBS_DIM, cfg.actions.rm()),
            (MULTI_OBS_DIM, cfg.actions.rm()),
        ],
        Framework::Single => vec![(SINGLE_OBS_DIM, cfg.actions.joint())],
    };
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (obs_dim, bounds))| {
            let config = cfg.ddpg.agent_config(obs_dim, bounds);
            Agent::new(config, derive_seed(seed, "agent", i as u64)).map_err(Error::from)
        })
        .collect()
}

pub fn train(cfg: &ScenarioConfig, framework: Framework, episodes: usize, seed: u64) -> Result<TrainOutcome> {
    train_with(cfg, framework, episodes, seed, |_, _| {})
}

/// Like [`train`], calling `progress(episode, total_reward)` after every
/// episode.
pub fn train_with(
    cfg: &ScenarioConfig,
    framework: Framework,
    episodes: usize,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let mut agents = new_agents(cfg, framework, seed)?;
    let mut curve = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let opts = EpisodeOptions {
            demand_seed: derive_seed(seed, "train-demand", episode as u64),
            noise_seed: derive_seed(seed, "train-noise", episode as u64),
            sigma: 0.0,
        };
        let result =
            run_episode(cfg, framework.strategy(), AgentSet::Learning(&mut agents), opts).map_err(|e| match e {
                Error::Rl(source) => Error::Divergence { episode, source },
                other => other,
            })?;
        let total = result.total_reward();
        curve.push(total);
        progress(episode, total);
    }
    Ok(TrainOutcome { agents, curve })
}
