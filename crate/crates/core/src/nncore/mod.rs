//! Minimal differentiable numerics: dense and convolutional networks with
//! hand-written reverse passes, losses, optimizers and checkpoints.

pub mod checkpoint;
pub mod conv;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{ConvCache, ConvLayer, ConvNet};
pub use mlp::{Activation, Dense, Mlp, MlpCache};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;

use crate::error::Result;

/// A model with an ordered list of named parameter tensors. Gradients are
/// always passed around in this order.
pub trait Parameterized {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn save_params(&self, ckpt: &mut Checkpoint, prefix: &str) {
        for (name, t) in self.param_names().iter().zip(self.params()) {
            ckpt.put_tensor(&format!("{prefix}.{name}"), t.clone());
        }
    }

    fn load_params(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
        let names = self.param_names();
        for (name, t) in names.iter().zip(self.params_mut()) {
            let stored = ckpt.tensor(&format!("{prefix}.{name}"))?;
            if stored.shape() != t.shape() {
                return Err(crate::error::Error::Shape(format!(
                    "checkpoint tensor `{prefix}.{name}` has shape {:?}, model expects {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            *t = stored.clone();
        }
        Ok(())
    }
}
