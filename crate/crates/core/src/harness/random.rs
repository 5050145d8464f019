use std::time::{Duration, Instant};

use rand::Rng as _;

use super::policies::{PolicyName, PolicyPlan};
use crate::environ::{Environment, EpisodeResult};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Best draw and full trace of a random search.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSearchOutcome {
    pub best: PolicyPlan,
    pub best_episode: usize,
    pub trace: Vec<EpisodeResult>,
}

/// Draws every ratio uniformly from `[a_floor, 1]`, clamps through the
/// same budget walk as the learned search and scores with the same reward.
/// Trace entries carry `sigma = 0` and no baseline. Fails only when no
/// draw could be evaluated.
pub fn random_search(env: &Environment<'_>, episodes: usize, seed: u64) -> Result<RandomSearchOutcome> {
    if episodes == 0 {
        return Err(Error::Config("random search needs at least one episode".into()));
    }
    let mut rng = rng_for(seed, "random_search");
    let a_floor = env.a_floor();
    let total = env.evaluator().cost_model().total();
    let mut trace = Vec::with_capacity(episodes);
    let mut best: Option<(usize, PolicyPlan)> = None;
    let mut best_reward: Option<f64> = None;
    for e in 0..episodes {
        let start = Instant::now();
        let walk = env.walk(|_, _| rng.random_range(a_floor..=1.0))?;
        let flops = env.evaluator().flops(&walk.clamped)?;
        let mut result = EpisodeResult {
            episode: e,
            sigma: 0.0,
            requested: walk.requested,
            clamped: walk.clamped,
            flops,
            flops_fraction: flops / total,
            error: None,
            reward: None,
            baseline: None,
            best_so_far: best_reward,
            tight: walk.tight,
            failed: None,
            duration: Duration::ZERO,
        };
        match env.score(&result.clamped) {
            Ok(score) => {
                result.error = Some(score.error);
                result.reward = Some(score.reward);
                if best_reward.is_none_or(|b| score.reward > b) {
                    best_reward = Some(score.reward);
                    let plan = PolicyPlan {
                        name: PolicyName::Random,
                        ratios: result.clamped.clone(),
                        flops_fraction: result.flops_fraction,
                        error: score.error,
                        reward: score.reward,
                    };
                    best = Some((e, plan));
                }
            }
            Err(err) => result.failed = Some(err.to_string()),
        }
        result.best_so_far = best_reward;
        result.duration = start.elapsed();
        trace.push(result);
    }
    let (best_episode, best) = best.ok_or_else(|| Error::Training("every random draw failed to evaluate".into()))?;
    Ok(RandomSearchOutcome {
        best,
        best_episode,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environ::{Constraint, RewardKind};
    use crate::evaluators::{Evaluator, ProxyModel};

    #[test]
    fn single_draw_is_the_best_and_trace_is_monotone() {
        let proxy = ProxyModel::benchmark();
        let env = Environment::new(&proxy, RewardKind::Err, Constraint::FlopsBudget { alpha: 0.5 }, 0.05).unwrap();
        let one = random_search(&env, 1, 3).unwrap();
        assert_eq!(one.best.ratios, one.trace[0].clamped);
        let many = random_search(&env, 200, 3).unwrap();
        assert!(many
            .trace
            .windows(2)
            .all(|w| w[1].best_so_far.unwrap() >= w[0].best_so_far.unwrap()));
        let budget = 0.5 * proxy.cost_model().total();
        assert!(many.trace.iter().all(|r| r.flops <= budget * (1.0 + 1e-12)));
        let again = random_search(&env, 200, 3).unwrap();
        for (x, y) in many.trace.iter().zip(&again.trace) {
            assert_eq!((&x.clamped, x.reward), (&y.clamped, y.reward));
        }
    }
}
