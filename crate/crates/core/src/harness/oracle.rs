use serde::{Deserialize, Serialize};

use crate::environ::reward_err;
use crate::error::{Error, Result};
use crate::evaluators::{Evaluator, ProxyModel};

/// Optimum of the proxy on a ratio grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub ratios: Vec<f64>,
    pub error: f64,
    pub reward: f64,
    pub flops_fraction: f64,
}

/// Grid points `k * step` for `k = 1..=1/step`.
pub fn grid(step: f64) -> Result<Vec<f64>> {
    let k = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || ((k * step) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {step} does not divide 1")));
    }
    Ok((1..=k as usize).map(|i| i as f64 / k).collect())
}

#[derive(Clone)]
struct Entry {
    cost: u128,
    penalty: f64,
    choice: Vec<u16>,
}

/// Exact dynamic program over grid ratios minimizing the proxy error under
/// `sum f_t a_t <= alpha * sum f_t`. Costs are kept in integer units of
/// `f_t / K` so the budget test is exact; the table holds only the
/// cost/penalty Pareto frontier.
pub fn dp_oracle(proxy: &ProxyModel, alpha: f64, step: f64) -> Result<OracleResult> {
    let points = grid(step)?;
    let k_max = points.len() as u128;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    let flops: Vec<u128> = proxy.cost_model().layer_flops().iter().map(|&f| f as u128).collect();
    let total: u128 = flops.iter().sum();
    let budget = ((alpha * (total * k_max) as f64) * (1.0 + 1e-12)).floor() as u128;
    if flops.iter().sum::<u128>() > budget {
        return Err(Error::Config(format!(
            "alpha = {alpha} is infeasible even with every ratio at {step}"
        )));
    }
    let min_rest: Vec<u128> = (0..=flops.len()).map(|i| flops[i..].iter().sum()).collect();
    let mut frontier = vec![Entry {
        cost: 0,
        penalty: 0.0,
        choice: Vec::new(),
    }];
    for (t, &f) in flops.iter().enumerate() {
        let mut next = Vec::with_capacity(frontier.len() * points.len());
        for e in &frontier {
            for (k, &a) in points.iter().enumerate() {
                let cost = e.cost + f * (k as u128 + 1);
                if cost + min_rest[t + 1] > budget {
                    break;
                }
                let mut choice = e.choice.clone();
                choice.push(k as u16);
                next.push(Entry {
                    cost,
                    penalty: e.penalty + proxy.layer_penalty(t, a),
                    choice,
                });
            }
        }
        next.sort_by(|a, b| a.cost.cmp(&b.cost).then(a.penalty.total_cmp(&b.penalty)));
        frontier.clear();
        for e in next {
            if frontier.last().is_none_or(|last: &Entry| e.penalty < last.penalty) {
                frontier.push(e);
            }
        }
    }
    let best = frontier
        .iter()
        .min_by(|a, b| a.penalty.total_cmp(&b.penalty))
        .expect("the all-minimum plan is feasible");
    let ratios: Vec<f64> = best.choice.iter().map(|&k| points[k as usize]).collect();
    let error = proxy.evaluate(&ratios)?;
    Ok(OracleResult {
        flops_fraction: proxy.flops(&ratios)? / proxy.cost_model().total(),
        reward: reward_err(error)?,
        error,
        ratios,
    })
}
