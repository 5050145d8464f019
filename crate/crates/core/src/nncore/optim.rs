use super::tensor::Tensor;
use super::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `v <- momentum * v + g; p <- p - lr * v`
    Sgd { momentum: f64 },
    /// Bias-corrected Adam.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Gradient-descent optimizer with per-parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::domain("learning rate", lr, "(0, inf)"));
        }
        Ok(Self {
            kind,
            lr,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(lr: f64, momentum: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd { momentum }, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
        )
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. Nothing is modified if any gradient is
    /// non-finite or shaped differently from its parameter.
    pub fn step<P: Parameterized + ?Sized>(&mut self, net: &mut P, grads: &[Tensor]) -> Result<()> {
        let names = net.param_names();
        let mut params = net.params_mut();
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for ((name, p), g) in names.iter().zip(&params).zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: name.clone() });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = params.iter().map(|p| vec![0.0; p.len()]).collect();
            }
        }
        self.steps += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                        *vv = momentum * *vv + gv;
                        *pv -= lr * *vv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                // lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections
                // folded into the step size and epsilon
                let c1 = 1.0 - beta1.powi(t);
                let root_c2 = (1.0 - beta2.powi(t)).sqrt();
                let step = lr * root_c2 / c1;
                let eps_hat = eps * root_c2;
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    for (((pv, gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        *pv -= step * *mv / (vv.sqrt() + eps_hat);
                    }
                }
            }
        }
        Ok(())
    }

    /// State buffers for checkpointing: step count, first and second moments.
    pub fn state(&self) -> (u64, &[Vec<f64>], &[Vec<f64>]) {
        (self.steps, &self.first, &self.second)
    }

    pub fn restore_state(&mut self, steps: u64, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) {
        self.steps = steps;
        self.first = first;
        self.second = second;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Tensor);

    impl Parameterized for Scalar {
        fn param_names(&self) -> Vec<String> {
            vec!["p".into()]
        }
        fn params(&self) -> Vec<&Tensor> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    fn scalar(v: f64) -> Scalar {
        Scalar(Tensor::from_vec(&[1], vec![v]).unwrap())
    }

    fn grad(v: f64) -> Vec<Tensor> {
        vec![Tensor::from_vec(&[1], vec![v]).unwrap()]
    }

    #[test]
    fn sgd_step() {
        let mut p = scalar(1.0);
        let mut opt = Optimizer::sgd(0.1, 0.0).unwrap();
        opt.step(&mut p, &grad(2.0)).unwrap();
        assert!((p.0.data()[0] - 0.8).abs() < 1e-15);
        opt.step(&mut p, &grad(0.0)).unwrap();
        assert!((p.0.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_hand_recurrence() {
        let mut p = scalar(0.0);
        let mut opt = Optimizer::adam(0.01).unwrap();
        for _ in 0..3 {
            opt.step(&mut p, &grad(1.0)).unwrap();
        }
        // with a constant gradient the bias-corrected ratio m_hat / sqrt(v_hat)
        // is exactly 1 at every step, so each step moves by lr / (1 + eps)
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((x - (-0.03 / (1.0 + 1e-8))).abs() < 1e-12);
        assert!((p.0.data()[0] - x).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut p = scalar(1.0);
        let mut opt = Optimizer::adam(1e-3).unwrap();
        match opt.step(&mut p, &grad(f64::NAN)) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, "p"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p.0.data()[0], 1.0);
        assert!(Optimizer::sgd(0.0, 0.9).is_err());
    }
}
