//! Direct 2-D convolution network: conv/relu/max-pool stages, global
//! average pooling and a dense classifier.
//!
//! Every output value accumulates `bias + sum_c sum_ky sum_kx w * x` in
//! ascending channel order. Removing an input channel therefore gives the
//! same bits as feeding zeros through it, which the pruning code relies on.

use super::mlp::{Activation, Dense};
use super::tensor::Tensor;
use super::Parameterized;
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[n, c, k, k]`
    pub weight: Tensor,
    /// `[n]`
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
    /// Non-overlapping max-pool window applied after the activation.
    pub pool: Option<usize>,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        outputs: usize,
        inputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        relu: bool,
        pool: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / ((inputs * kernel * kernel) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[outputs, inputs, kernel, kernel], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
            stride,
            pad,
            relu,
            pool,
        }
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn out_extent(&self, extent: usize) -> Result<usize> {
        let padded = extent + 2 * self.pad;
        if padded < self.kernel() || self.stride == 0 {
            return Err(Error::Shape(format!(
                "kernel {} does not fit input extent {extent} with pad {}",
                self.kernel(),
                self.pad
            )));
        }
        Ok((padded - self.kernel()) / self.stride + 1)
    }
}

/// Convolution stages followed by global average pooling and a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub convs: Vec<ConvLayer>,
    /// Identity-activated classifier, weight `[channels, classes]`.
    pub head: Dense,
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Vec<f64>,
    in_hw: (usize, usize),
    conv_hw: (usize, usize),
    /// post-activation conv output (before pooling)
    activated: Vec<f64>,
    /// flat argmax index into `activated` for each pooled value
    pool_argmax: Option<Vec<usize>>,
}

/// Activations recorded by [`ConvNet::forward_cached`].
#[derive(Debug, Clone)]
pub struct ConvCache {
    batch: usize,
    stages: Vec<StageCache>,
    /// `[batch, channels]` pooled features
    features: Vec<f64>,
    final_hw: (usize, usize),
}

impl ConvNet {
    pub fn new(convs: Vec<ConvLayer>, head: Dense) -> Result<Self> {
        if convs.is_empty() {
            return Err(Error::Shape("a conv net needs at least one conv layer".into()));
        }
        for pair in convs.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "conv channels {} -> {} do not chain",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        for conv in &convs {
            if conv.weight.shape().len() != 4
                || conv.weight.shape()[2] != conv.weight.shape()[3]
                || conv.bias.shape() != [conv.outputs()]
            {
                return Err(Error::Shape(format!(
                    "bad conv weight {:?} / bias {:?}",
                    conv.weight.shape(),
                    conv.bias.shape()
                )));
            }
        }
        if head.inputs() != convs.last().unwrap().outputs() || head.activation != Activation::Identity {
            return Err(Error::Shape(
                "head must be an identity dense layer over the last conv's channels".into(),
            ));
        }
        Ok(Self { convs, head })
    }

    pub fn input_channels(&self) -> usize {
        self.convs[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.head.outputs()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// `batch` is `[b, c, h, w]`; returns `[b, classes]` logits.
    pub fn forward_cached(&self, batch: &Tensor) -> Result<(Tensor, ConvCache)> {
        let &[b, c, h, w] = batch.shape() else {
            return Err(Error::Shape(format!(
                "expected [batch, c, h, w], got {:?}",
                batch.shape()
            )));
        };
        if c != self.input_channels() {
            return Err(Error::Shape(format!(
                "net expects {} input channels, got {c}",
                self.input_channels()
            )));
        }
        let mut stages = Vec::with_capacity(self.convs.len());
        let mut current = batch.data().to_vec();
        let mut hw = (h, w);
        for conv in &self.convs {
            let out_hw = (conv.out_extent(hw.0)?, conv.out_extent(hw.1)?);
            let mut activated = conv_forward(conv, &current, b, hw, out_hw);
            if conv.relu {
                activated.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let (next, pooled_hw, argmax) = match conv.pool {
                Some(p) => {
                    let (pooled, phw, idx) = max_pool(&activated, b * conv.outputs(), out_hw, p)?;
                    (pooled, phw, Some(idx))
                }
                None => (activated.clone(), out_hw, None),
            };
            stages.push(StageCache {
                input: std::mem::replace(&mut current, next),
                in_hw: hw,
                conv_hw: out_hw,
                activated,
                pool_argmax: argmax,
            });
            hw = pooled_hw;
        }
        let channels = self.convs.last().unwrap().outputs();
        let area = (hw.0 * hw.1) as f64;
        let features: Vec<f64> = current
            .chunks_exact(hw.0 * hw.1)
            .map(|plane| plane.iter().sum::<f64>() / area)
            .collect();
        let classes = self.classes();
        let mut logits = vec![0.0; b * classes];
        let weight = self.head.weight.data();
        for s in 0..b {
            let row = &mut logits[s * classes..(s + 1) * classes];
            row.copy_from_slice(self.head.bias.data());
            for i in 0..channels {
                let x = features[s * channels + i];
                for (o, acc) in row.iter_mut().enumerate() {
                    *acc += x * weight[i * classes + o];
                }
            }
        }
        let cache = ConvCache {
            batch: b,
            stages,
            features,
            final_hw: hw,
        };
        Ok((Tensor::from_vec(&[b, classes], logits)?, cache))
    }

    /// Reverse pass from `[batch, classes]` logit gradients. Returns
    /// parameter gradients in [`Parameterized`] order and the input gradient.
    pub fn backward(&self, cache: &ConvCache, logits_grad: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let b = cache.batch;
        let classes = self.classes();
        if logits_grad.len() != b * classes {
            return Err(Error::Shape(format!(
                "logit gradient has {} values, expected {}",
                logits_grad.len(),
                b * classes
            )));
        }
        let g = logits_grad.data();
        let channels = self.head.inputs();
        let mut d_head_w = vec![0.0; channels * classes];
        let mut d_head_b = vec![0.0; classes];
        let mut d_features = vec![0.0; b * channels];
        let hw = self.head.weight.data();
        for s in 0..b {
            let gs = &g[s * classes..(s + 1) * classes];
            for (acc, v) in d_head_b.iter_mut().zip(gs) {
                *acc += v;
            }
            for i in 0..channels {
                let x = cache.features[s * channels + i];
                let mut df = 0.0;
                for o in 0..classes {
                    d_head_w[i * classes + o] += x * gs[o];
                    df += gs[o] * hw[i * classes + o];
                }
                d_features[s * channels + i] = df;
            }
        }
        // global average pool
        let area = cache.final_hw.0 * cache.final_hw.1;
        let mut upstream: Vec<f64> = d_features
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d / area as f64, area))
            .collect();

        let mut conv_grads = Vec::with_capacity(self.convs.len());
        for (conv, stage) in self.convs.iter().zip(&cache.stages).rev() {
            let n = conv.outputs();
            let (oh, ow) = stage.conv_hw;
            let mut d_act = match &stage.pool_argmax {
                Some(argmax) => {
                    let mut d = vec![0.0; b * n * oh * ow];
                    for (&src, &gv) in argmax.iter().zip(&upstream) {
                        d[src] += gv;
                    }
                    d
                }
                None => upstream,
            };
            if conv.relu {
                for (d, &y) in d_act.iter_mut().zip(&stage.activated) {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (dw, db, dx) = conv_backward(conv, &stage.input, &d_act, b, stage.in_hw, stage.conv_hw);
            conv_grads.push((dw, db));
            upstream = dx;
        }
        conv_grads.reverse();
        let mut grads = Vec::with_capacity(2 * self.convs.len() + 2);
        for (conv, (dw, db)) in self.convs.iter().zip(conv_grads) {
            grads.push(Tensor::from_vec(conv.weight.shape(), dw)?);
            grads.push(Tensor::from_vec(&[conv.outputs()], db)?);
        }
        grads.push(Tensor::from_vec(&[channels, classes], d_head_w)?);
        grads.push(Tensor::from_vec(&[classes], d_head_b)?);
        let (h, w) = cache.stages[0].in_hw;
        let input_grad = Tensor::from_vec(&[b, self.input_channels(), h, w], upstream)?;
        Ok((grads, input_grad))
    }
}

impl Parameterized for ConvNet {
    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.convs.len())
            .flat_map(|i| [format!("conv{i}.weight"), format!("conv{i}.bias")])
            .collect();
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect();
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .convs
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }
}

/// Output columns `ox` for which `ox * stride + kx - pad` lands inside `[0, w)`.
fn valid_range(w: usize, ow: usize, stride: usize, pad: usize, kx: usize) -> (usize, usize) {
    // smallest ox with ox*stride + kx >= pad
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
    // largest ox with ox*stride + kx - pad <= w - 1
    let limit = w + pad - 1;
    let hi = if kx > limit {
        0
    } else {
        ((limit - kx) / stride + 1).min(ow)
    };
    (lo.min(hi), hi)
}

fn conv_forward(
    conv: &ConvLayer,
    input: &[f64],
    batch: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f64> {
    let (n, c, k) = (conv.outputs(), conv.inputs(), conv.kernel());
    let (stride, pad) = (conv.stride, conv.pad);
    let weight = conv.weight.data();
    let bias = conv.bias.data();
    let mut out = vec![0.0; batch * n * oh * ow];
    for s in 0..batch {
        for o in 0..n {
            let plane = &mut out[(s * n + o) * oh * ow..(s * n + o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bias[o]);
            for ci in 0..c {
                let src = &input[(s * c + ci) * h * w..(s * c + ci + 1) * h * w];
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(h, oh, stride, pad, ky);
                    for kx in 0..k {
                        let wv = weight[((o * c + ci) * k + ky) * k + kx];
                        let (ox_lo, ox_hi) = valid_range(w, ow, stride, pad, kx);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let row = &src[iy * w..(iy + 1) * w];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            if stride == 1 {
                                let ix0 = ox_lo + kx - pad;
                                for (d, x) in dst[ox_lo..ox_hi].iter_mut().zip(&row[ix0..]) {
                                    *d += wv * x;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    dst[ox] += wv * row[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    conv: &ConvLayer,
    input: &[f64],
    grad_out: &[f64],
    batch: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, c, k) = (conv.outputs(), conv.inputs(), conv.kernel());
    let (stride, pad) = (conv.stride, conv.pad);
    let weight = conv.weight.data();
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; n];
    let mut dx = vec![0.0; input.len()];
    for s in 0..batch {
        for o in 0..n {
            let g = &grad_out[(s * n + o) * oh * ow..(s * n + o + 1) * oh * ow];
            db[o] += g.iter().sum::<f64>();
            for ci in 0..c {
                let base = (s * c + ci) * h * w;
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_range(h, oh, stride, pad, ky);
                    for kx in 0..k {
                        let widx = ((o * c + ci) * k + ky) * k + kx;
                        let wv = weight[widx];
                        let (ox_lo, ox_hi) = valid_range(w, ow, stride, pad, kx);
                        let mut acc = 0.0;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                let gv = g[oy * ow + ox];
                                acc += gv * input[base + iy * w + ix];
                                dx[base + iy * w + ix] += gv * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

fn max_pool(
    input: &[f64],
    planes: usize,
    (h, w): (usize, usize),
    p: usize,
) -> Result<(Vec<f64>, (usize, usize), Vec<usize>)> {
    if p == 0 || h < p || w < p {
        return Err(Error::Shape(format!("pool window {p} does not fit {h}x{w}")));
    }
    let (ph, pw) = (h / p, w / p);
    let mut out = Vec::with_capacity(planes * ph * pw);
    let mut argmax = Vec::with_capacity(planes * ph * pw);
    for plane in 0..planes {
        let base = plane * h * w;
        for py in 0..ph {
            for px in 0..pw {
                let mut best = base + (py * p) * w + px * p;
                for dy in 0..p {
                    for dx in 0..p {
                        let idx = base + (py * p + dy) * w + px * p + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                argmax.push(best);
            }
        }
    }
    Ok((out, (ph, pw), argmax))
}
