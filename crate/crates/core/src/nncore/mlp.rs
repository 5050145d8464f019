use super::tensor::{gemm, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let (_, out) = weight.rows_cols()?;
        if weight.shape().len() != 2 || bias.shape() != [out] {
            return Err(Error::Shape(format!(
                "dense weight {:?} and bias {:?} disagree",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Uniform in `±scale/sqrt(fan_in)` for weights and biases.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, scale: f64, rng: &mut Rng) -> Self {
        let bound = scale / (inputs as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[inputs, outputs], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    batch: usize,
    // outputs[0] is the input, outputs[i + 1] the output of layer i
    outputs: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map_or(&[], |v| v.as_slice())
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer widths {} -> {} do not chain",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `sizes = [in, hidden.., out]`; hidden layers use `hidden`, the last
    /// layer `output`, whose init bound is further scaled by `output_scale`.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        output_scale: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == last {
                    Dense::init(w[0], w[1], output, output_scale, rng)
                } else {
                    Dense::init(w[0], w[1], hidden, 1.0, rng)
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    fn batch_of(&self, input: &Tensor) -> Result<usize> {
        let (rows, cols) = input.rows_cols()?;
        if cols != self.input_size() {
            return Err(Error::Shape(format!(
                "mlp expects {} inputs, got {cols}",
                self.input_size()
            )));
        }
        Ok(rows)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (out, cache) = self.forward_cached(input)?;
        drop(cache);
        Ok(out)
    }

    /// Forward pass over a `[batch, in]` (or `[in]`) input, keeping what the
    /// backward pass needs.
    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, MlpCache)> {
        let batch = self.batch_of(input)?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input.data().to_vec());
        for layer in &self.layers {
            let x = outputs.last().unwrap();
            let (fan_in, fan_out) = (layer.inputs(), layer.outputs());
            let mut y = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                y.extend_from_slice(layer.bias.data());
            }
            gemm(
                batch,
                fan_in,
                fan_out,
                x,
                false,
                layer.weight.data(),
                false,
                1.0,
                &mut y,
            );
            for v in &mut y {
                *v = layer.activation.apply(*v);
            }
            outputs.push(y);
        }
        let shape = if input.shape().len() == 1 {
            vec![self.output_size()]
        } else {
            vec![batch, self.output_size()]
        };
        let out = Tensor::from_vec(&shape, outputs.last().unwrap().clone())?;
        Ok((out, MlpCache { batch, outputs }))
    }

    fn check_output_grad(&self, cache: &MlpCache, output_grad: &Tensor) -> Result<()> {
        if output_grad.len() != cache.batch * self.output_size() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                cache.batch * self.output_size()
            )));
        }
        Ok(())
    }

    /// Reverse pass. Returns gradients in [`Parameterized`] order and the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, output_grad: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        self.reverse(cache, output_grad, true)
    }

    /// Gradient with respect to the input only.
    pub fn input_grad(&self, cache: &MlpCache, output_grad: &Tensor) -> Result<Tensor> {
        Ok(self.reverse(cache, output_grad, false)?.1)
    }

    fn reverse(&self, cache: &MlpCache, output_grad: &Tensor, with_params: bool) -> Result<(Vec<Tensor>, Tensor)> {
        self.check_output_grad(cache, output_grad)?;
        let batch = cache.batch;
        let mut grads = Vec::new();
        let mut upstream = output_grad.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.outputs[i + 1];
            let x = &cache.outputs[i];
            let (fan_in, fan_out) = (layer.inputs(), layer.outputs());
            for (g, &out) in upstream.iter_mut().zip(y) {
                *g *= layer.activation.derivative_from_output(out);
            }
            if with_params {
                let mut dw = vec![0.0; fan_in * fan_out];
                gemm(fan_in, batch, fan_out, x, true, &upstream, false, 0.0, &mut dw);
                let mut db = vec![0.0; fan_out];
                for row in upstream.chunks_exact(fan_out) {
                    for (acc, g) in db.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                grads.push(Tensor::from_vec(&[fan_out], db)?);
                grads.push(Tensor::from_vec(&[fan_in, fan_out], dw)?);
            }
            let mut dx = vec![0.0; batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                &upstream,
                false,
                layer.weight.data(),
                true,
                0.0,
                &mut dx,
            );
            upstream = dx;
        }
        grads.reverse();
        let in_shape = if batch == 1 && output_grad.shape().len() == 1 {
            vec![self.input_size()]
        } else {
            vec![batch, self.input_size()]
        };
        Ok((grads, Tensor::from_vec(&in_shape, upstream)?))
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.layers.len() != source.layers.len() {
            return Err(Error::Shape("soft update between different architectures".into()));
        }
        for (dst, src) in self.params_mut().into_iter().zip(source.params()) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape("soft update between different architectures".into()));
            }
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }
}

impl Parameterized for Mlp {
    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }

    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
