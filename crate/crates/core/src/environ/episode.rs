use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::budget::{check_feasible, clamp_action, BudgetState};
use super::{reward, Constraint, RewardKind};
use crate::agent::{DdpgAgent, NoiseSchedule, Transition};
use crate::error::{Error, Result};
use crate::evaluators::Evaluator;
use crate::netmodel::{check_ratio, raw_state, NormalizedState, StateNormalizer};

/// One pass over the prunable layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub requested: Vec<f64>,
    pub clamped: Vec<f64>,
    /// State seen before each decision.
    pub states: Vec<NormalizedState>,
    pub tight: bool,
}

/// Outcome of scoring a ratio vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub error: f64,
    pub flops: f64,
    pub flops_fraction: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub sigma: f64,
    #[serde(rename = "actions")]
    pub requested: Vec<f64>,
    pub clamped: Vec<f64>,
    pub flops: f64,
    pub flops_fraction: f64,
    pub error: Option<f64>,
    pub reward: Option<f64>,
    pub baseline: Option<f64>,
    pub best_so_far: Option<f64>,
    pub tight: bool,
    pub failed: Option<String>,
    #[serde(skip)]
    pub duration: Duration,
}

/// An evaluator together with the reward, constraint and action floor of a
/// run. Learned search, random search and baselines all score through it.
pub struct Environment<'e> {
    evaluator: &'e dyn Evaluator,
    normalizer: StateNormalizer,
    reward: RewardKind,
    constraint: Constraint,
    a_floor: f64,
}

impl<'e> Environment<'e> {
    pub fn new(evaluator: &'e dyn Evaluator, reward: RewardKind, constraint: Constraint, a_floor: f64) -> Result<Self> {
        check_ratio("a_floor", a_floor)?;
        let cost = evaluator.cost_model();
        if cost.prunable() == 0 {
            return Err(Error::Config("the network has no prunable layer".into()));
        }
        if let Some(alpha) = constraint.alpha() {
            check_feasible(cost, alpha, a_floor)?;
        }
        Ok(Self {
            evaluator,
            normalizer: StateNormalizer::new(cost.network())?,
            reward,
            constraint,
            a_floor,
        })
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.evaluator
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn a_floor(&self) -> f64 {
        self.a_floor
    }

    pub fn decisions(&self) -> usize {
        self.evaluator.cost_model().prunable()
    }

    /// State before the decision that follows `committed`.
    pub fn state(&self, committed: &[f64]) -> Result<NormalizedState> {
        let cost = self.evaluator.cost_model();
        let i = committed.len();
        let f = cost.layer_flops();
        let reduced: f64 = (0..i).map(|j| f[j] - cost.layer_cost(j, |k| committed[k])).sum();
        let rest: f64 = f[i + 1..].iter().sum();
        let a_prev = committed.last().copied().unwrap_or(1.0);
        let raw = raw_state(cost.network(), i + 1, reduced, rest, a_prev)?;
        Ok(self.normalizer.normalize(&raw))
    }

    /// Walks every prunable layer, asking `propose(decision, state)` for a
    /// ratio and clamping it to the budget.
    pub fn walk(&self, mut propose: impl FnMut(usize, &NormalizedState) -> f64) -> Result<Walk> {
        let n = self.decisions();
        let mut walk = Walk {
            requested: Vec::with_capacity(n),
            clamped: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            tight: false,
        };
        for i in 0..n {
            let s = self.state(&walk.clamped)?;
            let a = propose(i, &s).clamp(self.a_floor, 1.0);
            let executed = match self.constraint {
                Constraint::None => a,
                Constraint::FlopsBudget { alpha } => {
                    let budget = BudgetState::at(self.evaluator.cost_model(), alpha, &walk.clamped, self.a_floor);
                    let c = clamp_action(a, &budget, self.a_floor);
                    walk.tight |= c.tight;
                    c.value
                }
            };
            walk.requested.push(a);
            walk.clamped.push(executed);
            walk.states.push(s);
        }
        Ok(walk)
    }

    pub fn score(&self, ratios: &[f64]) -> Result<Score> {
        let flops = self.evaluator.flops(ratios)?;
        let error = self.evaluator.evaluate(ratios)?;
        Ok(Score {
            error,
            flops,
            flops_fraction: flops / self.evaluator.cost_model().total(),
            reward: reward(self.reward, error, flops)?,
        })
    }
}

/// Runs episode `e`: explore with the scheduled noise, score the clamped
/// ratios, store the transitions with the shared reward, update the
/// baseline, then one train step per stored transition once the buffer
/// holds a batch. A failed evaluation is reported in the result and
/// nothing is learned from it.
pub fn run_episode(
    agent: &mut DdpgAgent,
    env: &Environment<'_>,
    schedule: &NoiseSchedule,
    e: usize,
    best_before: Option<f64>,
) -> Result<EpisodeResult> {
    let start = Instant::now();
    let sigma = schedule.sigma_for_episode(e)?;
    let walk = env.walk(|_, s| agent.explore(s, sigma))?;
    let flops = env.evaluator().flops(&walk.clamped)?;
    let mut result = EpisodeResult {
        episode: e,
        sigma,
        flops,
        flops_fraction: flops / env.evaluator().cost_model().total(),
        requested: walk.requested.clone(),
        clamped: walk.clamped.clone(),
        error: None,
        reward: None,
        baseline: agent.baseline(),
        best_so_far: best_before,
        tight: walk.tight,
        failed: None,
        duration: Duration::ZERO,
    };
    let score = match env.score(&walk.clamped) {
        Ok(score) => score,
        Err(err) => {
            result.failed = Some(err.to_string());
            result.duration = start.elapsed();
            return Ok(result);
        }
    };
    let n = walk.clamped.len();
    let transitions = (0..n).map(|i| Transition {
        s: walk.states[i],
        a: walk.clamped[i],
        r: score.reward,
        s_next: if i + 1 < n { walk.states[i + 1] } else { walk.states[i] },
        terminal: i + 1 == n,
    });
    agent.remember(transitions, score.reward);
    agent.update_baseline(score.reward);
    for _ in 0..n {
        if agent.buffer().len() >= agent.config().batch_size {
            agent.train_step()?;
        }
    }
    result.error = Some(score.error);
    result.reward = Some(score.reward);
    result.baseline = agent.baseline();
    result.best_so_far = Some(best_before.map_or(score.reward, |b| b.max(score.reward)));
    result.duration = start.elapsed();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::evaluators::ProxyModel;
    use crate::netmodel::{LayerSpec, NetworkSpec};

    fn small_agent(seed: u64) -> DdpgAgent {
        DdpgAgent::new(
            AgentConfig {
                hidden: vec![16, 16],
                batch_size: 8,
                buffer_capacity: 64,
                ..AgentConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn identity_policy_scores_the_base_error() {
        let proxy = ProxyModel::benchmark();
        let env = Environment::new(&proxy, RewardKind::Err, Constraint::None, 0.05).unwrap();
        let mut agent = small_agent(1);
        let last = agent.actor_mut().layers_mut().len() - 1;
        let head = &mut agent.actor_mut().layers_mut()[last];
        head.weight.fill(0.0);
        head.bias.fill(60.0);
        let schedule = NoiseSchedule {
            warmup_episodes: 1,
            warmup_sigma: 0.0,
            decay_episodes: 0,
            final_sigma: 0.0,
        };
        let r = run_episode(&mut agent, &env, &schedule, 0, None).unwrap();
        assert_eq!(r.clamped, vec![1.0; 5]);
        assert_eq!(r.error, Some(proxy.base()));
        assert_eq!(r.reward, Some(-proxy.base()));
        assert_eq!(agent.buffer().len(), 5);
        assert!(agent.buffer().iter().all(|t| t.r == -proxy.base()));
        assert_eq!(agent.buffer().iter().filter(|t| t.terminal).count(), 1);
    }

    #[test]
    fn budget_holds_and_runs_repeat_exactly() {
        let proxy = ProxyModel::benchmark();
        let env = Environment::new(&proxy, RewardKind::Err, Constraint::FlopsBudget { alpha: 0.5 }, 0.05).unwrap();
        let schedule = NoiseSchedule {
            warmup_episodes: 5,
            warmup_sigma: 0.5,
            decay_episodes: 5,
            final_sigma: 0.05,
        };
        let run = || {
            let mut agent = small_agent(9);
            let mut best = None;
            let mut out = Vec::new();
            for e in 0..10 {
                let r = run_episode(&mut agent, &env, &schedule, e, best).unwrap();
                best = r.best_so_far;
                out.push(EpisodeResult {
                    duration: Duration::ZERO,
                    ..r
                });
            }
            out
        };
        let a = run();
        assert!(a
            .iter()
            .all(|r| r.flops <= 0.5 * proxy.cost_model().total() * (1.0 + 1e-12)));
        assert_eq!(a, run());
    }

    #[test]
    fn state_tracks_reduced_and_rest() {
        let net = NetworkSpec::new(vec![
            LayerSpec::conv(1, 4, 4, 4, 4, 1, 1, 0, None),
            LayerSpec::conv(2, 4, 4, 4, 4, 1, 1, 0, None),
            LayerSpec::conv(3, 4, 4, 4, 4, 1, 1, 0, None),
        ])
        .unwrap();
        let proxy = ProxyModel::new(net, vec![0.01; 3], 0.1, 2.0).unwrap();
        let env = Environment::new(&proxy, RewardKind::Err, Constraint::None, 0.05).unwrap();
        let s = env.state(&[0.5]).unwrap();
        // reduced = 0.5 f of a total 3 f, rest = f
        assert!((s.0[8] - 0.5 / 3.0).abs() < 1e-12);
        assert!((s.0[9] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.0[10], 0.5);
        let last = env.state(&[0.5, 0.5]).unwrap();
        assert_eq!(last.0[9], 0.0);
    }
}
