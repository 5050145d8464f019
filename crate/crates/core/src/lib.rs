//! Reinforcement-learned channel pruning.
//!
//! A DDPG agent walks a convolutional network layer by layer and picks the
//! fraction of output channels to keep in each one. Episodes end with an
//! accuracy evaluation of the pruned network and a single reward shared by
//! every step; an optional FLOPs budget limits the action range as the walk
//! proceeds.
//!
//! Modules:
//! - [`netmodel`]: layer descriptions, FLOPs, state features, ratio application
//! - [`nncore`]: small dense/conv networks with exact gradients
//! - [`agent`]: the DDPG learner and its replay buffer
//! - [`environ`]: episode driver, budget clamp, rewards, search loop
//! - [`evaluators`]: analytic proxy and a pruned tiny CNN
//! - [`harness`]: baselines, random search, DP oracle, config, CLI

pub mod agent;
pub mod environ;
pub mod error;
pub mod evaluators;
pub mod harness;
pub mod netmodel;
pub mod nncore;
pub mod seed;

pub use error::{Error, Result};
