//! Oracles and fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use autoprune::agent::{AgentConfig, DdpgAgent, Transition};
use autoprune::evaluators::{kept_channel_sets, Evaluator};
use autoprune::netmodel::{Accounting, CostModel, LayerSpec, NetworkSpec, NormalizedState, STATE_DIM};
use autoprune::nncore::{loss, Activation, ConvLayer, ConvNet, Dense, Mlp, Parameterized, Tensor};
use autoprune::seed::{rng_for, Rng};
use autoprune::Result;
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|)` over a whole gradient tensor, with a floor so
/// that all-but-zero gradients compare absolutely.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    diff / scale.max(1e-8)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(x);
            x[i] = orig - FD_STEP;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Worst relative error over every parameter tensor and the input.
pub fn check_model<M: Parameterized + Clone>(
    model: &M,
    input: &Tensor,
    loss_of: impl Fn(&M, &Tensor) -> f64,
    analytic: impl Fn(&M, &Tensor) -> (Vec<Tensor>, Tensor),
) -> f64 {
    let (grads, input_grad) = analytic(model, input);
    let mut worst: f64 = 0.0;
    let n_params = model.params().len();
    for p in 0..n_params {
        let mut probe = model.clone();
        let mut values = probe.params()[p].data().to_vec();
        let numeric = numeric_gradient(&mut values, |v| {
            probe.params_mut()[p].data_mut().copy_from_slice(v);
            loss_of(&probe, input)
        });
        worst = worst.max(relative_error(grads[p].data(), &numeric));
    }
    let mut x = input.data().to_vec();
    let numeric = numeric_gradient(&mut x, |v| {
        let t = Tensor::from_vec(input.shape(), v.to_vec()).unwrap();
        loss_of(model, &t)
    });
    worst.max(relative_error(input_grad.data(), &numeric))
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

/// Mlp with random depth, widths and activations under a random linear
/// functional of its output.
pub fn mlp_instance(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad.mlp");
    let depth = rng.random_range(1..4);
    let mut sizes = vec![rng.random_range(1..6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..7));
    }
    let acts = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Identity,
        Activation::Relu,
    ];
    let hidden = acts[rng.random_range(0..acts.len())];
    let output = acts[rng.random_range(0..3)];
    let net = Mlp::new(&sizes, hidden, output, 1.0, &mut rng).unwrap();
    let batch = rng.random_range(1..5);
    let input = random_tensor(&[batch, sizes[0]], &mut rng);
    let weights = random_tensor(&[batch, *sizes.last().unwrap()], &mut rng);
    let w = weights.clone();
    check_model(
        &net,
        &input,
        move |m, x| {
            m.forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(w.data())
                .map(|(y, c)| y * c)
                .sum()
        },
        move |m, x| {
            let (_, cache) = m.forward_cached(x).unwrap();
            m.backward(&cache, &weights).unwrap()
        },
    )
}

/// Single dense layer under mse against a random target.
pub fn dense_mse_instance(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad.dense");
    let (i, o, b) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5));
    let acts = [Activation::Tanh, Activation::Sigmoid, Activation::Identity];
    let layer = Dense::init(i, o, acts[rng.random_range(0..3)], 1.0, &mut rng);
    let net = Mlp::from_layers(vec![layer]).unwrap();
    let input = random_tensor(&[b, i], &mut rng);
    let target = random_tensor(&[b, o], &mut rng);
    let t = target.clone();
    check_model(
        &net,
        &input,
        move |m, x| loss::mse(&m.forward(x).unwrap(), &t).unwrap().0,
        move |m, x| {
            let (y, cache) = m.forward_cached(x).unwrap();
            let (_, g) = loss::mse(&y, &target).unwrap();
            m.backward(&cache, &g).unwrap()
        },
    )
}

/// Small conv net (random widths, padding, stride, pooling) under softmax
/// cross-entropy.
pub fn convnet_instance(seed: u64) -> f64 {
    let mut rng = rng_for(seed, "grad.conv");
    let c0 = rng.random_range(1..3);
    let c1 = rng.random_range(1..4);
    let c2 = rng.random_range(1..4);
    let classes = rng.random_range(2..4);
    let hw = 6;
    let stride = rng.random_range(1..3);
    let pool = if stride == 1 { Some(2) } else { None };
    let k2 = rng.random_range(0..2) * 2 + 1;
    let convs = vec![
        ConvLayer::init(c1, c0, 3, stride, 1, true, pool, &mut rng),
        ConvLayer::init(c2, c1, k2, 1, k2 / 2, rng.random_bool(0.5), None, &mut rng),
    ];
    let head = Dense::init(c2, classes, Activation::Identity, 1.0, &mut rng);
    let net = ConvNet::new(convs, head).unwrap();
    let batch = rng.random_range(1..4);
    let input = random_tensor(&[batch, c0, hw, hw], &mut rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let l = labels.clone();
    check_model(
        &net,
        &input,
        move |m, x| loss::softmax_cross_entropy(&m.forward(x).unwrap(), &l).unwrap().0,
        move |m, x| {
            let (y, cache) = m.forward_cached(x).unwrap();
            let (_, g) = loss::softmax_cross_entropy(&y, &labels).unwrap();
            m.backward(&cache, &g).unwrap()
        },
    )
}

/// One state, one step, reward `-(a - 0.7)^2`: returns the learned action
/// after `steps` updates on a buffer filled with uniform actions.
pub fn bandit_action(config: AgentConfig, seed: u64, steps: usize) -> f64 {
    let s = NormalizedState([0.5; STATE_DIM]);
    let mut agent = DdpgAgent::new(config, seed).unwrap();
    let mut rng = rng_for(seed, "bandit.fill");
    for _ in 0..agent.config().buffer_capacity {
        let a: f64 = rng.random_range(0.0..1.0);
        let t = Transition {
            s,
            a,
            r: 0.0,
            s_next: s,
            terminal: true,
        };
        agent.remember([t], -(a - 0.7).powi(2));
    }
    for _ in 0..steps {
        agent.train_step().unwrap();
    }
    agent.act(&s)
}

/// Evaluator that only counts FLOPs.
pub struct FlopsOnly(pub CostModel);

impl Evaluator for FlopsOnly {
    fn name(&self) -> &str {
        "flops_only"
    }

    fn cost_model(&self) -> &CostModel {
        &self.0
    }

    fn evaluate(&self, _ratios: &[f64]) -> Result<f64> {
        Ok(0.1)
    }
}

/// Random conv chain, optionally ending in a dense head fed by the last conv.
pub fn random_network(rng: &mut Rng) -> NetworkSpec {
    let convs = rng.random_range(2..7);
    let mut layers = Vec::new();
    let mut c = rng.random_range(1..4);
    let mut hw = [8usize, 16, 32][rng.random_range(0..3)];
    for t in 1..=convs {
        let n = rng.random_range(1..65);
        let k = [1usize, 3, 5][rng.random_range(0..3)];
        layers.push(LayerSpec::conv(t, n, c, hw, hw, k, 1, k / 2, (t > 1).then_some(t - 1)));
        c = n;
        if hw > 2 && rng.random_bool(0.3) {
            hw /= 2;
        }
    }
    if rng.random_bool(0.5) {
        layers.push(LayerSpec::dense(convs + 1, rng.random_range(2..11), c, Some(convs)));
    }
    NetworkSpec::new(layers).unwrap()
}

pub fn random_cost_model(rng: &mut Rng) -> CostModel {
    let accounting = if rng.random_bool(0.5) {
        Accounting::Linear
    } else {
        Accounting::Chained
    };
    CostModel::new(random_network(rng), accounting).unwrap()
}

/// Full-size net with the filters `prune_network` drops set to zero.
pub fn zero_masked(net: &ConvNet, ratios: &[f64]) -> ConvNet {
    let keep = kept_channel_sets(net, ratios).unwrap();
    let mut masked = net.clone();
    for (conv, kept) in masked.convs.iter_mut().zip(&keep) {
        let per_filter = conv.weight.len() / conv.outputs();
        for o in 0..conv.outputs() {
            if !kept.contains(&o) {
                conv.weight.data_mut()[o * per_filter..(o + 1) * per_filter].fill(0.0);
                conv.bias.data_mut()[o] = 0.0;
            }
        }
    }
    masked
}

/// Mean of `N(mu, sigma)` truncated to `[0, 1]` by composite Simpson
/// integration of the unnormalized density.
pub fn truncated_normal_mean(mu: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..=n {
        let x = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = (-0.5 * ((x - mu) / sigma).powi(2)).exp();
        mass += w * p;
        first += w * x * p;
    }
    first / mass
}

/// Relative float tolerance on budget comparisons.
pub const BUDGET_FLOAT_TOLERANCE: f64 = 1e-9;

/// One constrained episode on a random network with random (often greedy)
/// proposals. Returns `(achieved, bound)` where the bound is
/// `alpha * total + rounding slack`.
pub fn budget_trial(seed: u64) -> (f64, f64) {
    use autoprune::environ::{Constraint, Environment, RewardKind};
    let mut rng = rng_for(seed, "budget.trial");
    let cost = random_cost_model(&mut rng);
    let a_floor = rng.random_range(0.01..0.2);
    let least = cost.continuous_flops(&vec![a_floor; cost.prunable()]) / cost.total();
    let alpha = (least + rng.random_range(0.0..1.0) * (1.0 - least)).clamp(least, 1.0);
    let total = cost.total();
    let slack = cost.rounding_slack();
    let eval = FlopsOnly(cost);
    let env = Environment::new(&eval, RewardKind::Err, Constraint::FlopsBudget { alpha }, a_floor).unwrap();
    let greedy = rng.random_range(0.0..1.0);
    let walk = env
        .walk(|_, _| {
            if rng.random_bool(greedy) {
                1.0
            } else {
                rng.random_range(0.0..=1.0)
            }
        })
        .unwrap();
    assert!(walk.clamped.iter().all(|&a| a >= a_floor && a <= 1.0));
    let achieved = eval.flops(&walk.clamped).unwrap();
    (achieved, alpha * total + slack + BUDGET_FLOAT_TOLERANCE * total)
}
