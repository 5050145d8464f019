use serde::{Deserialize, Serialize};

use crate::environ::Environment;
use crate::error::{Error, Result};
use crate::netmodel::{Accounting, CostModel};

/// Relative tolerance on the budget fraction a baseline must hit.
pub const BUDGET_TOLERANCE: f64 = 0.005;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Uniform,
    ShallowAggressive,
    DeepAggressive,
    Random,
    Learned,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Uniform => "uniform",
            PolicyName::ShallowAggressive => "shallow_aggressive",
            PolicyName::DeepAggressive => "deep_aggressive",
            PolicyName::Random => "random",
            PolicyName::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPlan {
    pub name: PolicyName,
    pub ratios: Vec<f64>,
    pub flops_fraction: f64,
    pub error: f64,
    pub reward: f64,
}

impl PolicyPlan {
    pub fn score(name: PolicyName, ratios: Vec<f64>, env: &Environment<'_>) -> Result<Self> {
        let s = env.score(&ratios)?;
        Ok(Self {
            name,
            ratios,
            flops_fraction: s.flops_fraction,
            error: s.error,
            reward: s.reward,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "(0, 1]"))
    }
}

/// Largest `x` in `[lo, hi]` with `fraction(x) <= limit`, for a
/// non-decreasing `fraction` with `fraction(lo) <= limit`.
fn bisect(lo: f64, hi: f64, limit: f64, fraction: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fraction(mid) <= limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn unreachable(alpha: f64, least: f64, a_floor: f64) -> Error {
    Error::Config(format!(
        "alpha = {alpha} is unreachable: ratios at {a_floor} still cost {least:.4} of the FLOPs"
    ))
}

/// Achieved FLOPs fraction; ratios are always in range here.
fn achieved_fraction(cost: &CostModel, ratios: &[f64]) -> f64 {
    cost.achieved_flops(ratios).map_or(f64::INFINITY, |f| f / cost.total())
}

/// One ratio for every prunable layer: the largest whose achieved FLOPs
/// fraction stays within the tolerance above `alpha`.
pub fn uniform_ratios(cost: &CostModel, alpha: f64, a_floor: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let n = cost.prunable();
    if alpha >= 1.0 {
        return Ok(vec![1.0; n]);
    }
    let fraction = |a: f64| achieved_fraction(cost, &vec![a; n]);
    let limit = alpha * (1.0 + BUDGET_TOLERANCE);
    let least = fraction(a_floor);
    if least > limit {
        return Err(unreachable(alpha, least, a_floor));
    }
    let a = match cost.accounting() {
        Accounting::Linear => alpha.max(a_floor),
        Accounting::Chained => bisect(a_floor, 1.0, limit, fraction),
    };
    Ok(vec![a; n])
}

/// Linear-in-depth ramp `scale * (1/2 .. 1)`, clamped to `[a_floor, 1]`.
/// Shallow-aggressive starts at the low end, deep-aggressive at the high end.
fn ramp(n: usize, scale: f64, shallow_aggressive: bool, a_floor: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let depth = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
            let pos = if shallow_aggressive { depth } else { 1.0 - depth };
            (scale * (0.5 + 0.5 * pos)).clamp(a_floor, 1.0)
        })
        .collect()
}

/// Linear ramp of ratios across depth, scaled by bisection to the largest
/// plan whose achieved FLOPs fraction stays within the tolerance above
/// `alpha`.
pub fn graded_ratios(cost: &CostModel, alpha: f64, a_floor: f64, shallow_aggressive: bool) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let n = cost.prunable();
    if n < 2 {
        return Err(Error::Config(
            "graded policies need at least two prunable layers".into(),
        ));
    }
    let fraction = |s: f64| achieved_fraction(cost, &ramp(n, s, shallow_aggressive, a_floor));
    let limit = alpha * (1.0 + BUDGET_TOLERANCE);
    let least = fraction(0.0);
    if least > limit {
        return Err(unreachable(alpha, least, a_floor));
    }
    let scale = bisect(0.0, 2.0, limit, fraction);
    Ok(ramp(n, scale, shallow_aggressive, a_floor))
}

pub fn uniform_policy(env: &Environment<'_>, alpha: f64) -> Result<PolicyPlan> {
    let ratios = uniform_ratios(env.evaluator().cost_model(), alpha, env.a_floor())?;
    PolicyPlan::score(PolicyName::Uniform, ratios, env)
}

pub fn graded_policy(env: &Environment<'_>, name: PolicyName, alpha: f64) -> Result<PolicyPlan> {
    let shallow = match name {
        PolicyName::ShallowAggressive => true,
        PolicyName::DeepAggressive => false,
        other => return Err(Error::Config(format!("`{}` is not a graded policy", other.as_str()))),
    };
    let ratios = graded_ratios(env.evaluator().cost_model(), alpha, env.a_floor(), shallow)?;
    PolicyPlan::score(name, ratios, env)
}
