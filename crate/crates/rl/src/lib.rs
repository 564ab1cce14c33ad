//! Continuous-action actor-critic learning (DDPG) without an autodiff framework.
//!
//! The networks here are small fully-connected MLPs with hand-written
//! reverse-mode gradients. An [`Agent`] bundles the online and target
//! networks, an Adam optimizer per network, a replay buffer and a decaying
//! Gaussian exploration schedule, and maps its tanh-bounded raw actions onto
//! per-dimension [`ActionBounds`].

pub mod agent;
pub mod error;
pub mod mlp;
pub mod optim;
pub mod persist;
pub mod replay;

pub use agent::{ActionBounds, Agent, AgentConfig, TrainStats};
pub use error::{Result, RlError};
pub use mlp::{Activation, Dense, Gradients, Mlp};
pub use optim::Adam;
pub use persist::{load_agent, save_agent};
pub use replay::{ReplayBuffer, Transition};
