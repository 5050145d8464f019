//! Declarative network description, FLOPs accounting and layer embeddings.
//!
//! FLOPs are counted as multiply-accumulates. A convolution costs
//! `n * c * k^2 * h_out * w_out`, a dense layer `n * c`. Pooling and
//! activations are free; they only show up through the declared input
//! sizes of the following layer.

mod spec_file;

pub use spec_file::{parse_network, read_network, write_network};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Dense,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Dense => "dense",
        }
    }
}

/// One convolution or dense layer.
///
/// `n` is the number of output channels, `c` the number of input channels,
/// `h`/`w` the input spatial size. `pred` is the 1-based id of the layer whose
/// outputs feed this layer's input channels, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub pred: Option<usize>,
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        id: usize,
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        pred: Option<usize>,
    ) -> Self {
        Self {
            id,
            kind: LayerKind::Conv,
            n,
            c,
            h,
            w,
            k,
            stride,
            pad,
            pred,
        }
    }

    pub fn dense(id: usize, n: usize, c: usize, pred: Option<usize>) -> Self {
        Self {
            id,
            kind: LayerKind::Dense,
            n,
            c,
            h: 1,
            w: 1,
            k: 1,
            stride: 1,
            pad: 0,
            pred,
        }
    }

    fn geometry_error(&self, reason: impl Into<String>) -> Error {
        Error::Geometry {
            layer: self.id,
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.c == 0 || self.k == 0 || self.stride == 0 {
            return Err(self.geometry_error("n, c, k and stride must be at least 1"));
        }
        if self.h == 0 || self.w == 0 {
            return Err(self.geometry_error("input size must be at least 1x1"));
        }
        if self.kind == LayerKind::Dense
            && (self.h != 1 || self.w != 1 || self.k != 1 || self.stride != 1 || self.pad != 0)
        {
            return Err(self.geometry_error("dense layers need h = w = k = stride = 1, pad = 0"));
        }
        self.output_size().map(|_| ())
    }

    /// Output spatial size `(h_out, w_out)`.
    pub fn output_size(&self) -> Result<(usize, usize)> {
        let out = |extent: usize, axis: &str| {
            let padded = extent + 2 * self.pad;
            if padded < self.k {
                Err(self.geometry_error(format!("kernel {} larger than padded {axis} extent {padded}", self.k)))
            } else {
                Ok((padded - self.k) / self.stride + 1)
            }
        };
        Ok((out(self.h, "height")?, out(self.w, "width")?))
    }
}

/// FLOPs (multiply-accumulates) of a single layer.
pub fn conv_flops(layer: &LayerSpec) -> Result<u64> {
    if layer.n == 0 || layer.c == 0 || layer.k == 0 || layer.stride == 0 {
        return Err(layer.geometry_error("n, c, k and stride must be at least 1"));
    }
    match layer.kind {
        LayerKind::Dense => Ok(layer.n as u64 * layer.c as u64),
        LayerKind::Conv => {
            let (h_out, w_out) = layer.output_size()?;
            Ok(layer.n as u64 * layer.c as u64 * (layer.k * layer.k) as u64 * h_out as u64 * w_out as u64)
        }
    }
}

/// Ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Validates ids (1..=T in order), geometry and channel chaining.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if layer.id != i + 1 {
                return Err(layer.geometry_error(format!("expected layer id {}", i + 1)));
            }
            layer.validate()?;
            if let Some(p) = layer.pred {
                if p == 0 || p >= layer.id {
                    return Err(layer.geometry_error(format!("predecessor {p} must refer to an earlier layer")));
                }
                let pred = &layers[p - 1];
                if pred.n != layer.c {
                    return Err(layer.geometry_error(format!(
                        "input channels {} do not match {} outputs of layer {p}",
                        layer.c, pred.n
                    )));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn empty() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, t: usize) -> Result<&LayerSpec> {
        if t == 0 || t > self.layers.len() {
            return Err(Error::Index {
                what: "layer",
                index: t,
                valid: format!("1..={}", self.layers.len()),
            });
        }
        Ok(&self.layers[t - 1])
    }

    /// Layers whose output channels may be pruned: all but the final one,
    /// whose outputs are fixed by the task.
    pub fn prunable_count(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    pub fn layer_flops(&self) -> Result<Vec<u64>> {
        self.layers.iter().map(conv_flops).collect()
    }

    pub fn total_flops(&self) -> Result<u64> {
        total_flops(self)
    }
}

pub fn total_flops(network: &NetworkSpec) -> Result<u64> {
    network.layers.iter().map(conv_flops).sum()
}

/// Number of channels kept when a layer of `n` channels is pruned to ratio
/// `a`: round half up, never fewer than one.
pub fn kept_channels(n: usize, a: f64) -> usize {
    ((a * n as f64 + 0.5).floor() as usize).clamp(1, n.max(1))
}

pub(crate) fn check_ratio(what: impl Into<String>, a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(what, a, "(0, 1]"))
    }
}

/// Prunes each prunable layer to `ratios[i]` of its output channels and
/// propagates the new widths to chained successors.
pub fn apply_ratios(network: &NetworkSpec, ratios: &[f64]) -> Result<NetworkSpec> {
    let prunable = network.prunable_count();
    if ratios.len() != prunable {
        return Err(Error::Shape(format!(
            "expected {prunable} ratios, got {}",
            ratios.len()
        )));
    }
    for (i, &a) in ratios.iter().enumerate() {
        check_ratio(format!("ratio for layer {}", i + 1), a)?;
    }
    let mut layers = network.layers.clone();
    for (layer, &a) in layers.iter_mut().zip(ratios) {
        layer.n = kept_channels(layer.n, a);
    }
    for i in 0..layers.len() {
        if let Some(p) = layers[i].pred {
            layers[i].c = layers[p - 1].n;
        }
    }
    NetworkSpec::new(layers)
}

pub const STATE_DIM: usize = 11;

/// The per-layer embedding `(t, n, c, h, w, stride, k, flops_t, reduced, rest, a_prev)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawStateFeatures {
    pub t: usize,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
    pub k: usize,
    pub flops_t: f64,
    pub reduced: f64,
    pub rest: f64,
    pub a_prev: f64,
}

impl RawStateFeatures {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.t as f64,
            self.n as f64,
            self.c as f64,
            self.h as f64,
            self.w as f64,
            self.stride as f64,
            self.k as f64,
            self.flops_t,
            self.reduced,
            self.rest,
            self.a_prev,
        ]
    }
}

/// Raw features of layer `t` (1-based).
///
/// `flops_t` is the layer's cost at its current input width: when the layer
/// is chained to a predecessor, the original cost scaled by `a_prev`.
pub fn raw_state(network: &NetworkSpec, t: usize, reduced: f64, rest: f64, a_prev: f64) -> Result<RawStateFeatures> {
    let layer = network.layer(t)?;
    check_ratio("a_prev", a_prev)?;
    let base = conv_flops(layer)? as f64;
    let flops_t = if layer.pred.is_some() { base * a_prev } else { base };
    Ok(RawStateFeatures {
        t,
        n: layer.n,
        c: layer.c,
        h: layer.h,
        w: layer.w,
        stride: layer.stride,
        k: layer.k,
        flops_t,
        reduced,
        rest,
        a_prev,
    })
}

/// Normalized embedding, every component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedState(pub [f64; STATE_DIM]);

impl NormalizedState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Min/max scaling statistics of a fixed original network.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNormalizer {
    min: [f64; 8],
    max: [f64; 8],
    total: f64,
}

impl StateNormalizer {
    pub fn new(network: &NetworkSpec) -> Result<Self> {
        let mut min = [f64::INFINITY; 8];
        let mut max = [f64::NEG_INFINITY; 8];
        for (i, layer) in network.layers().iter().enumerate() {
            let row = [
                (i + 1) as f64,
                layer.n as f64,
                layer.c as f64,
                layer.h as f64,
                layer.w as f64,
                layer.stride as f64,
                layer.k as f64,
                conv_flops(layer)? as f64,
            ];
            for j in 0..8 {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self {
            min,
            max,
            total: network.total_flops()? as f64,
        })
    }

    pub fn normalize(&self, raw: &RawStateFeatures) -> NormalizedState {
        let x = raw.to_array();
        let mut out = [0.0; STATE_DIM];
        for j in 0..8 {
            let span = self.max[j] - self.min[j];
            // constant features map to 0
            out[j] = if span > 0.0 {
                ((x[j] - self.min[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        let by_total = |v: f64| {
            if self.total > 0.0 {
                (v / self.total).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        out[8] = by_total(raw.reduced);
        out[9] = by_total(raw.rest);
        out[10] = raw.a_prev.clamp(0.0, 1.0);
        NormalizedState(out)
    }
}

pub fn normalize_states(network: &NetworkSpec, raw: &RawStateFeatures) -> Result<NormalizedState> {
    Ok(StateNormalizer::new(network)?.normalize(raw))
}

/// How the FLOPs of a pruned network are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Accounting {
    /// `F = sum f_t * a_t`: only a layer's own output ratio matters and every
    /// layer is prunable.
    Linear,
    /// Chained: a layer's cost scales with its own output ratio and with its
    /// predecessor's. The final layer is never pruned.
    Chained,
}

impl Accounting {
    pub fn as_str(self) -> &'static str {
        match self {
            Accounting::Linear => "linear",
            Accounting::Chained => "chained",
        }
    }
}

/// A network together with the FLOPs accounting used to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    network: NetworkSpec,
    accounting: Accounting,
    layer_flops: Vec<f64>,
}

impl CostModel {
    pub fn new(network: NetworkSpec, accounting: Accounting) -> Result<Self> {
        let layer_flops = network.layer_flops()?.into_iter().map(|f| f as f64).collect();
        Ok(Self {
            network,
            accounting,
            layer_flops,
        })
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.network
    }

    pub fn accounting(&self) -> Accounting {
        self.accounting
    }

    /// Original per-layer FLOPs.
    pub fn layer_flops(&self) -> &[f64] {
        &self.layer_flops
    }

    pub fn total(&self) -> f64 {
        self.layer_flops.iter().sum()
    }

    /// Number of decisions per episode. Decision `j` prunes layer `j + 1`.
    pub fn prunable(&self) -> usize {
        match self.accounting {
            Accounting::Linear => self.network.len(),
            Accounting::Chained => self.network.prunable_count(),
        }
    }

    pub fn is_prunable(&self, layer_index: usize) -> bool {
        layer_index < self.prunable()
    }

    /// Predecessor (0-based) whose ratio scales the input of `layer_index`.
    pub fn input_source(&self, layer_index: usize) -> Option<usize> {
        match self.accounting {
            Accounting::Linear => None,
            Accounting::Chained => self.network.layers()[layer_index].pred.map(|p| p - 1),
        }
    }

    /// Continuous cost of `layer_index` given every layer's output ratio.
    pub fn layer_cost(&self, layer_index: usize, ratio_of: impl Fn(usize) -> f64) -> f64 {
        let r_in = self.input_source(layer_index).map_or(1.0, &ratio_of);
        self.layer_flops[layer_index] * r_in * ratio_of(layer_index)
    }

    fn ratio_lookup<'a>(&self, ratios: &'a [f64]) -> impl Fn(usize) -> f64 + 'a {
        move |i| ratios.get(i).copied().unwrap_or(1.0)
    }

    /// Continuous (unrounded) FLOPs of a full ratio vector.
    pub fn continuous_flops(&self, ratios: &[f64]) -> f64 {
        let lookup = self.ratio_lookup(ratios);
        (0..self.network.len()).map(|i| self.layer_cost(i, &lookup)).sum()
    }

    /// FLOPs actually achieved by a ratio vector: linear accounting is exact;
    /// chained accounting rounds channel counts through [`apply_ratios`].
    pub fn achieved_flops(&self, ratios: &[f64]) -> Result<f64> {
        if ratios.len() != self.prunable() {
            return Err(Error::Shape(format!(
                "expected {} ratios, got {}",
                self.prunable(),
                ratios.len()
            )));
        }
        for (i, &a) in ratios.iter().enumerate() {
            check_ratio(format!("ratio for layer {}", i + 1), a)?;
        }
        match self.accounting {
            Accounting::Linear => Ok(self.continuous_flops(ratios)),
            Accounting::Chained => Ok(apply_ratios(&self.network, ratios)?.total_flops()? as f64),
        }
    }

    /// Upper bound on how far channel rounding can push chained FLOPs above
    /// the continuous cost: one extra output and one extra input channel per
    /// layer.
    pub fn rounding_slack(&self) -> f64 {
        match self.accounting {
            Accounting::Linear => 0.0,
            Accounting::Chained => self
                .network
                .layers()
                .iter()
                .zip(&self.layer_flops)
                .map(|(layer, f)| {
                    let (n, c) = (layer.n as f64, layer.c as f64);
                    f * (1.0 / n + 1.0 / c + 1.0 / (n * c))
                })
                .sum(),
        }
    }
}
