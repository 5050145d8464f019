//! The compression environment: a layer-by-layer walk that turns actions
//! into keep ratios, the FLOPs-budget clamp, rewards and the search loop.

mod budget;
mod episode;
mod search;

pub use budget::{check_feasible, clamp_action, BudgetState, Clamped};
pub use episode::{run_episode, Environment, EpisodeResult, Score, Walk};
pub use search::{
    log_line, protocol_fingerprint, read_episode_log, search, write_summary, SearchConfig, SearchOutcome,
    AGENT_CHECKPOINT, BEST, EPISODE_LOG, SUMMARY,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardKind {
    /// `-error`
    Err,
    /// `-error * ln(flops)`
    Flops,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Err => "err",
            RewardKind::Flops => "flops",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "err" => Some(RewardKind::Err),
            "flops" => Some(RewardKind::Flops),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    None,
    /// Achieved FLOPs must not exceed `alpha` times the original.
    FlopsBudget {
        alpha: f64,
    },
}

impl Constraint {
    pub fn alpha(self) -> Option<f64> {
        match self {
            Constraint::None => None,
            Constraint::FlopsBudget { alpha } => Some(alpha),
        }
    }

    pub fn describe(self) -> String {
        match self {
            Constraint::None => "none".into(),
            Constraint::FlopsBudget { alpha } => format!("flops_budget({alpha})"),
        }
    }
}

fn check_error(error: f64) -> Result<()> {
    if (0.0..=1.0).contains(&error) {
        Ok(())
    } else {
        Err(Error::domain("error", error, "[0, 1]"))
    }
}

pub fn reward_err(error: f64) -> Result<f64> {
    check_error(error)?;
    Ok(-error)
}

/// `-error * ln(flops)`; needs `flops >= 2` so the logarithm is positive.
pub fn reward_flops(error: f64, flops: f64) -> Result<f64> {
    check_error(error)?;
    if !(flops >= 2.0 && flops.is_finite()) {
        return Err(Error::domain("flops", flops, "[2, inf)"));
    }
    Ok(-error * flops.ln())
}

pub fn reward(kind: RewardKind, error: f64, flops: f64) -> Result<f64> {
    match kind {
        RewardKind::Err => reward_err(error),
        RewardKind::Flops => reward_flops(error, flops),
    }
}
