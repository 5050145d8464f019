//! Accuracy evaluators: map per-layer keep ratios to a validation error.

mod dataset;
mod proxy;
mod tinycnn;

pub use dataset::{DatasetConfig, Split, SyntheticDataset, IMAGE_SIZE, NUM_CLASSES};
pub use proxy::{benchmark_network, ProxyModel, SENSITIVITY_RANGE};
pub use tinycnn::{
    channel_importance, evaluate_net, fine_tune, kept_channel_sets, load_convnet, pretrain_tinycnn, prune_network,
    save_convnet, tiny_cnn, tiny_cnn_network, train_tinycnn, PretrainConfig, TinyCnnEvaluator,
};

use crate::error::Result;
use crate::netmodel::CostModel;

/// Pure mapping from keep ratios (one per prunable layer) to an error
/// fraction in `[0, 1]`.
pub trait Evaluator {
    fn name(&self) -> &str;

    fn cost_model(&self) -> &CostModel;

    fn layer_count(&self) -> usize {
        self.cost_model().prunable()
    }

    fn evaluate(&self, ratios: &[f64]) -> Result<f64>;

    fn flops(&self, ratios: &[f64]) -> Result<f64> {
        self.cost_model().achieved_flops(ratios)
    }

    fn base_error(&self) -> Result<f64> {
        self.evaluate(&vec![1.0; self.layer_count()])
    }
}
