use std::path::Path;

use rand::seq::SliceRandom;

use super::dataset::{Split, SyntheticDataset, IMAGE_SIZE, NUM_CLASSES};
use super::Evaluator;
use crate::error::{Error, Result};
use crate::netmodel::{check_ratio, kept_channels, Accounting, CostModel, LayerSpec, NetworkSpec};
use crate::nncore::{loss, Activation, Checkpoint, ConvLayer, ConvNet, Dense, Optimizer, Parameterized, Tensor};
use crate::seed::{rng_for, Rng};

const EVAL_BATCH: usize = 100;

/// FLOPs descriptor of [`tiny_cnn`] at 16x16 input.
pub fn tiny_cnn_network() -> NetworkSpec {
    NetworkSpec::new(vec![
        LayerSpec::conv(1, 8, 1, 16, 16, 3, 1, 1, None),
        LayerSpec::conv(2, 16, 8, 8, 8, 3, 1, 1, Some(1)),
        LayerSpec::conv(3, 32, 16, 4, 4, 3, 1, 1, Some(2)),
        LayerSpec::dense(4, NUM_CLASSES, 32, Some(3)),
    ])
    .expect("tiny cnn descriptor is valid")
}

/// conv 1->8, relu, pool 2; conv 8->16, relu, pool 2; conv 16->32, relu;
/// global average pool; dense 32->4.
pub fn tiny_cnn(rng: &mut Rng) -> ConvNet {
    let convs = vec![
        ConvLayer::init(8, 1, 3, 1, 1, true, Some(2), rng),
        ConvLayer::init(16, 8, 3, 1, 1, true, Some(2), rng),
        ConvLayer::init(32, 16, 3, 1, 1, true, None, rng),
    ];
    let head = Dense::init(32, NUM_CLASSES, Activation::Identity, 1.0, rng);
    ConvNet::new(convs, head).expect("tiny cnn is consistent")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Minimum validation accuracy [`pretrain_tinycnn`] accepts.
    pub gate: f64,
    /// Learning rate of [`fine_tune`].
    pub fine_tune_lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 32,
            gate: 0.90,
            fine_tune_lr: 0.01,
        }
    }
}

/// Top-1 error of `net` on a split.
pub fn evaluate_net(net: &ConvNet, split: &Split) -> Result<f64> {
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..split.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (images, labels) = split.gather(chunk);
        let logits = net.forward(&images)?;
        for (row, &label) in logits.data().chunks_exact(net.classes()).zip(&labels) {
            if loss::argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok(1.0 - correct as f64 / split.len() as f64)
}

fn train_epochs(
    net: &mut ConvNet,
    split: &Split,
    epochs: usize,
    lr: f64,
    momentum: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let mut opt = Optimizer::sgd(lr, momentum)?;
    let mut order: Vec<usize> = (0..split.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let (images, labels) = split.gather(chunk);
            let (logits, cache) = net.forward_cached(&images)?;
            let (l, grad) = loss::softmax_cross_entropy(&logits, &labels)?;
            if !l.is_finite() {
                return Err(Error::Training(format!("loss is {l} in epoch {epoch}")));
            }
            let (grads, _) = net.backward(&cache, &grad)?;
            opt.step(net, &grads)?;
        }
    }
    Ok(())
}

/// Trains a fresh [`tiny_cnn`] with sgd + momentum and returns it with its
/// validation accuracy. No accuracy gate is applied.
pub fn train_tinycnn(dataset: &SyntheticDataset, config: &PretrainConfig, seed: u64) -> Result<(ConvNet, f64)> {
    let mut net = tiny_cnn(&mut rng_for(seed, "tinycnn.init"));
    let mut rng = rng_for(seed, "tinycnn.pretrain");
    train_epochs(
        &mut net,
        &dataset.train,
        config.epochs,
        config.lr,
        config.momentum,
        config.batch_size,
        &mut rng,
    )?;
    let accuracy = 1.0 - evaluate_net(&net, &dataset.validation)?;
    Ok((net, accuracy))
}

/// [`train_tinycnn`] that fails when validation accuracy stays below the gate.
pub fn pretrain_tinycnn(dataset: &SyntheticDataset, config: &PretrainConfig, seed: u64) -> Result<(ConvNet, f64)> {
    let (net, accuracy) = train_tinycnn(dataset, config, seed)?;
    if accuracy < config.gate {
        return Err(Error::Training(format!(
            "validation accuracy {accuracy:.4} is below the {:.2} gate",
            config.gate
        )));
    }
    Ok((net, accuracy))
}

/// Short sgd run on a (pruned) net: `round(fraction * config.epochs)`
/// epochs at the fine-tuning learning rate. Returns the net and its new
/// validation error.
pub fn fine_tune(
    net: &ConvNet,
    dataset: &SyntheticDataset,
    fraction: f64,
    config: &PretrainConfig,
    seed: u64,
) -> Result<(ConvNet, f64)> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(Error::domain("fine-tune fraction", fraction, "[0, inf)"));
    }
    let epochs = (fraction * config.epochs as f64).round() as usize;
    let mut tuned = net.clone();
    let mut rng = rng_for(seed, "tinycnn.finetune");
    train_epochs(
        &mut tuned,
        &dataset.train,
        epochs,
        config.fine_tune_lr,
        config.momentum,
        config.batch_size,
        &mut rng,
    )?;
    let error = evaluate_net(&tuned, &dataset.validation)?;
    Ok((tuned, error))
}

/// Score of each output channel of a conv layer: the L1 mass of the weights
/// that consume it downstream. `consumer` is the next conv's `[n', n, k, k]`
/// weight or the dense head's `[n, classes]` weight.
pub fn channel_importance(layer_weight: &Tensor, consumer: &Tensor) -> Result<Vec<f64>> {
    let n = *layer_weight
        .shape()
        .first()
        .ok_or_else(|| Error::Shape("empty layer weight".into()))?;
    match consumer.shape() {
        &[next, c, k1, k2] if c == n => {
            let span = k1 * k2;
            let mut scores = vec![0.0; n];
            for o in 0..next {
                for (j, score) in scores.iter_mut().enumerate() {
                    let start = (o * n + j) * span;
                    *score += consumer.data()[start..start + span]
                        .iter()
                        .map(|v| v.abs())
                        .sum::<f64>();
                }
            }
            Ok(scores)
        }
        &[c, classes] if c == n => Ok(consumer
            .data()
            .chunks_exact(classes)
            .map(|row| row.iter().map(|v| v.abs()).sum())
            .collect()),
        other => Err(Error::Shape(format!(
            "consumer weight {other:?} does not take {n} channels"
        ))),
    }
}

/// Indices of the `keep` highest scores, ties going to the lower index,
/// returned in ascending order.
fn top_channels(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..keep.min(scores.len())].to_vec();
    kept.sort_unstable();
    kept
}

fn select_filters(conv: &ConvLayer, outputs: &[usize], inputs: &[usize]) -> ConvLayer {
    let (c, k) = (conv.inputs(), conv.kernel());
    let span = k * k;
    let mut weight = Vec::with_capacity(outputs.len() * inputs.len() * span);
    for &o in outputs {
        for &i in inputs {
            let start = (o * c + i) * span;
            weight.extend_from_slice(&conv.weight.data()[start..start + span]);
        }
    }
    let bias = outputs.iter().map(|&o| conv.bias.data()[o]).collect();
    ConvLayer {
        weight: Tensor::from_vec(&[outputs.len(), inputs.len(), k, k], weight).unwrap(),
        bias: Tensor::from_vec(&[outputs.len()], bias).unwrap(),
        ..conv.clone()
    }
}

/// Channels each conv layer keeps at the given ratios.
pub fn kept_channel_sets(net: &ConvNet, ratios: &[f64]) -> Result<Vec<Vec<usize>>> {
    if ratios.len() != net.convs.len() {
        return Err(Error::Shape(format!(
            "expected {} ratios, got {}",
            net.convs.len(),
            ratios.len()
        )));
    }
    let mut sets = Vec::with_capacity(ratios.len());
    for (i, (&a, conv)) in ratios.iter().zip(&net.convs).enumerate() {
        check_ratio(format!("ratio for layer {}", i + 1), a)?;
        let consumer = match net.convs.get(i + 1) {
            Some(next) => &next.weight,
            None => &net.head.weight,
        };
        let scores = channel_importance(&conv.weight, consumer)?;
        sets.push(top_channels(&scores, kept_channels(conv.outputs(), a)));
    }
    Ok(sets)
}

/// Removes the lowest-scoring output channels of each conv layer together
/// with the matching input slices of its consumer. Scores are taken on the
/// unpruned net.
pub fn prune_network(net: &ConvNet, ratios: &[f64]) -> Result<ConvNet> {
    let sets = kept_channel_sets(net, ratios)?;
    let mut convs = Vec::with_capacity(net.convs.len());
    let mut inputs: Vec<usize> = (0..net.input_channels()).collect();
    for (conv, kept) in net.convs.iter().zip(&sets) {
        convs.push(select_filters(conv, kept, &inputs));
        inputs = kept.clone();
    }
    let classes = net.classes();
    let weight: Vec<f64> = inputs
        .iter()
        .flat_map(|&i| net.head.weight.data()[i * classes..(i + 1) * classes].iter().copied())
        .collect();
    let head = Dense::new(
        Tensor::from_vec(&[inputs.len(), classes], weight)?,
        net.head.bias.clone(),
        Activation::Identity,
    )?;
    ConvNet::new(convs, head)
}

/// Stores a conv net's parameters and per-layer hyperparameters.
pub fn save_convnet(net: &ConvNet, ckpt: &mut Checkpoint) {
    ckpt.put_meta("convnet.layers", net.convs.len());
    for (i, conv) in net.convs.iter().enumerate() {
        let pool = conv.pool.map_or("none".to_string(), |p| p.to_string());
        ckpt.put_meta(
            &format!("convnet.conv{i}"),
            format!("stride={} pad={} relu={} pool={pool}", conv.stride, conv.pad, conv.relu),
        );
    }
    net.save_params(ckpt, "convnet");
}

pub fn load_convnet(ckpt: &Checkpoint) -> Result<ConvNet> {
    let layers: usize = ckpt.require_meta("convnet.layers")?;
    let mut convs = Vec::with_capacity(layers);
    for i in 0..layers {
        let key = format!("convnet.conv{i}");
        let bad = || Error::Config(format!("checkpoint entry `{key}` is malformed"));
        let spec = ckpt.meta(&key).ok_or_else(bad)?;
        let mut fields = std::collections::HashMap::new();
        for part in spec.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
        convs.push(ConvLayer {
            weight: ckpt.tensor(&format!("convnet.conv{i}.weight"))?.clone(),
            bias: ckpt.tensor(&format!("convnet.conv{i}.bias"))?.clone(),
            stride: get("stride")?.parse().map_err(|_| bad())?,
            pad: get("pad")?.parse().map_err(|_| bad())?,
            relu: get("relu")?.parse().map_err(|_| bad())?,
            pool: match get("pool")? {
                "none" => None,
                p => Some(p.parse().map_err(|_| bad())?),
            },
        });
    }
    let head = Dense::new(
        ckpt.tensor("convnet.head.weight")?.clone(),
        ckpt.tensor("convnet.head.bias")?.clone(),
        Activation::Identity,
    )?;
    ConvNet::new(convs, head)
}

/// Prunes a pretrained tiny CNN and scores it on the validation split
/// without any retraining.
#[derive(Debug, Clone)]
pub struct TinyCnnEvaluator {
    net: ConvNet,
    cost: CostModel,
    validation: Split,
}

impl TinyCnnEvaluator {
    pub fn new(net: ConvNet, validation: Split) -> Result<Self> {
        let cost = CostModel::new(tiny_cnn_network(), Accounting::Chained)?;
        let expected: Vec<usize> = cost.network().layers()[..cost.prunable()].iter().map(|l| l.n).collect();
        let actual: Vec<usize> = net.convs.iter().map(|c| c.outputs()).collect();
        if expected != actual || validation.images.shape()[2..] != [IMAGE_SIZE, IMAGE_SIZE] {
            return Err(Error::Shape(format!(
                "evaluator expects the unpruned tiny cnn (widths {expected:?}), got {actual:?}"
            )));
        }
        Ok(Self { net, cost, validation })
    }

    pub fn load(prefix: &Path, validation: Split) -> Result<Self> {
        Self::new(load_convnet(&Checkpoint::load(prefix)?)?, validation)
    }

    pub fn net(&self) -> &ConvNet {
        &self.net
    }

    pub fn validation(&self) -> &Split {
        &self.validation
    }

    pub fn evaluate_pruned(&self, ratios: &[f64]) -> Result<f64> {
        evaluate_net(&prune_network(&self.net, ratios)?, &self.validation)
    }
}

impl Evaluator for TinyCnnEvaluator {
    fn name(&self) -> &str {
        "tinycnn"
    }

    fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    fn evaluate(&self, ratios: &[f64]) -> Result<f64> {
        self.evaluate_pruned(ratios)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::dataset::DatasetConfig;

    #[test]
    fn top_k_prefers_high_scores_and_low_indices() {
        assert_eq!(top_channels(&[3.0, 1.0, 4.0, 2.0], 2), vec![0, 2]);
        assert_eq!(top_channels(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn importance_of_unused_and_duplicate_channels() {
        let mut rng = rng_for(1, "t");
        let layer = Tensor::uniform(&[3, 2, 3, 3], 1.0, &mut rng);
        let mut next = Tensor::uniform(&[4, 3, 3, 3], 1.0, &mut rng);
        for o in 0..4 {
            for e in 0..9 {
                next.data_mut()[(o * 3 + 1) * 9 + e] = 0.0;
                let v = next.data()[(o * 3) * 9 + e];
                next.data_mut()[(o * 3 + 2) * 9 + e] = -v;
            }
        }
        let s = channel_importance(&layer, &next).unwrap();
        assert_eq!(s[1], 0.0);
        assert_eq!(s[0], s[2]);
        assert!(channel_importance(&layer, &Tensor::zeros(&[4, 5, 3, 3])).is_err());
        let head = Tensor::from_vec(&[3, 2], vec![1.0, -2.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(channel_importance(&layer, &head).unwrap(), vec![3.0, 0.0, 1.0]);
    }

    #[test]
    fn pruned_shapes_follow_the_rounding_rule() {
        let net = tiny_cnn(&mut rng_for(2, "t"));
        let p = prune_network(&net, &[0.5, 0.25, 0.1]).unwrap();
        let widths: Vec<usize> = p.convs.iter().map(|c| c.outputs()).collect();
        assert_eq!(widths, vec![4, 4, 3]);
        assert_eq!(p.convs[1].inputs(), 4);
        assert_eq!(p.head.inputs(), 3);
        assert!(prune_network(&net, &[0.5, 0.0, 1.0]).is_err());
        assert_eq!(prune_network(&net, &[1.0; 3]).unwrap(), net);
    }

    #[test]
    fn pruned_flops_match_the_descriptor() {
        let net = tiny_cnn(&mut rng_for(3, "t"));
        let eval_split = SyntheticDataset::generate_with(
            DatasetConfig {
                train: 4,
                validation: 4,
                noise: 0.1,
            },
            1,
        )
        .unwrap()
        .validation;
        let e = TinyCnnEvaluator::new(net.clone(), eval_split).unwrap();
        let ratios = [0.3, 0.6, 0.8];
        let pruned = prune_network(&net, &ratios).unwrap();
        let spec = crate::netmodel::apply_ratios(e.cost_model().network(), &ratios).unwrap();
        for (conv, layer) in pruned.convs.iter().zip(spec.layers()) {
            assert_eq!((conv.outputs(), conv.inputs()), (layer.n, layer.c));
        }
    }

    #[test]
    fn convnet_checkpoint_round_trip() {
        let net = prune_network(&tiny_cnn(&mut rng_for(4, "t")), &[0.5, 0.5, 0.5]).unwrap();
        let mut c = Checkpoint::new();
        save_convnet(&net, &mut c);
        let dir = tempfile::tempdir().unwrap();
        c.save(&dir.path().join("net")).unwrap();
        let back = load_convnet(&Checkpoint::load(&dir.path().join("net")).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
