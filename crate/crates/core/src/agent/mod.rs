//! The DDPG learner: replay buffer, exploration noise and the actor-critic
//! pair with target copies and a reward baseline.

mod buffer;
mod ddpg;
mod noise;

pub use buffer::{ReplayBuffer, Transition};
pub use ddpg::{AgentConfig, DdpgAgent, TrainStats};
pub use noise::{truncated_normal, NoiseSchedule, TRUNCATION_ATTEMPTS};
