use rand::Rng as _;

use super::Evaluator;
use crate::error::{Error, Result};
use crate::netmodel::{check_ratio, Accounting, CostModel, LayerSpec, NetworkSpec};
use crate::seed::rng_for;

/// Range the seeded per-layer sensitivities are drawn from.
pub const SENSITIVITY_RANGE: (f64, f64) = (0.001, 0.05);

/// Separable analytic error model:
/// `error = clamp(e0 + sum_t s_t * (1 - a_t)^p, 0, 1)` with linear FLOPs
/// `F = sum_t f_t * a_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    cost: CostModel,
    sensitivities: Vec<f64>,
    base_error: f64,
    exponent: f64,
}

/// The five-layer network of the proxy benchmark (a small VGG-like stack on
/// 32x32 inputs with uneven per-layer cost).
pub fn benchmark_network() -> NetworkSpec {
    NetworkSpec::new(vec![
        LayerSpec::conv(1, 32, 3, 32, 32, 3, 1, 1, None),
        LayerSpec::conv(2, 32, 32, 32, 32, 3, 1, 1, Some(1)),
        LayerSpec::conv(3, 64, 32, 16, 16, 3, 1, 1, Some(2)),
        LayerSpec::conv(4, 128, 64, 8, 8, 3, 1, 1, Some(3)),
        LayerSpec::conv(5, 256, 128, 4, 4, 1, 1, 0, Some(4)),
    ])
    .expect("benchmark network is valid")
}

impl ProxyModel {
    pub fn new(network: NetworkSpec, sensitivities: Vec<f64>, base_error: f64, exponent: f64) -> Result<Self> {
        if sensitivities.len() != network.len() {
            return Err(Error::Shape(format!(
                "{} sensitivities for {} layers",
                sensitivities.len(),
                network.len()
            )));
        }
        if let Some(&s) = sensitivities.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::domain("sensitivity", s, "(0, inf)"));
        }
        if !(0.0..=1.0).contains(&base_error) {
            return Err(Error::domain("base error", base_error, "[0, 1]"));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::domain("exponent", exponent, "(0, inf)"));
        }
        Ok(Self {
            cost: CostModel::new(network, Accounting::Linear)?,
            sensitivities,
            base_error,
            exponent,
        })
    }

    /// Sensitivities drawn uniformly from [`SENSITIVITY_RANGE`].
    pub fn seeded(network: NetworkSpec, base_error: f64, exponent: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, "proxy.sensitivity");
        let (lo, hi) = SENSITIVITY_RANGE;
        let s = (0..network.len()).map(|_| rng.random_range(lo..=hi)).collect();
        Self::new(network, s, base_error, exponent)
    }

    /// The shipped benchmark: [`benchmark_network`], `e0 = 0.06`, `p = 2`,
    /// sensitivities from seed 0.
    pub fn benchmark() -> Self {
        Self::seeded(benchmark_network(), 0.06, 2.0, 0).expect("benchmark proxy is valid")
    }

    pub fn sensitivities(&self) -> &[f64] {
        &self.sensitivities
    }

    pub fn base(&self) -> f64 {
        self.base_error
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Penalty contributed by one layer at ratio `a`.
    pub fn layer_penalty(&self, layer: usize, a: f64) -> f64 {
        self.sensitivities[layer] * (1.0 - a).powf(self.exponent)
    }
}

impl Evaluator for ProxyModel {
    fn name(&self) -> &str {
        "proxy"
    }

    fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    fn evaluate(&self, ratios: &[f64]) -> Result<f64> {
        if ratios.len() != self.sensitivities.len() {
            return Err(Error::Shape(format!(
                "expected {} ratios, got {}",
                self.sensitivities.len(),
                ratios.len()
            )));
        }
        let mut error = self.base_error;
        for (i, &a) in ratios.iter().enumerate() {
            check_ratio(format!("ratio for layer {}", i + 1), a)?;
            error += self.layer_penalty(i, a);
        }
        Ok(error.clamp(0.0, 1.0))
    }
}
