//! First-order optimisers with serialisable state.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::nn::{Grads, Parameterized};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Heavy-ball SGD: `v = μv + g; θ -= lr·v`.
    Sgd {
        momentum: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::Sgd { momentum }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(config_err!("momentum must lie in [0, 1), got {momentum}"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 =>
            {
                Err(config_err!("invalid Adam hyper-parameters"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub steps: u64,
    /// Momentum buffer (SGD) or first moment (Adam).
    pub first: Vec<Vec<T>>,
    /// Second moment (Adam only; empty for SGD).
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new<P: Parameterized<T> + ?Sized>(kind: OptimizerKind, lr: f64, net: &P) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        let second = match kind {
            OptimizerKind::Adam { .. } => zeros.clone(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Optimizer {
            kind,
            lr,
            steps: 0,
            first: zeros,
            second,
        }
    }

    pub fn step<P: Parameterized<T> + ?Sized>(&mut self, net: &mut P, grads: &Grads<T>) {
        self.steps += 1;
        let lr = T::lit(self.lr);
        let mut params = net.params_mut();
        assert_eq!(params.len(), grads.0.len(), "gradient layout mismatch");
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                let mu = T::lit(momentum);
                for ((p, g), v) in params.iter_mut().zip(&grads.0).zip(self.first.iter_mut()) {
                    for ((pv, &gv), vv) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vv = mu * *vv + gv;
                        *pv -= lr * *vv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (b1, b2, e) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let t = self.steps as i32;
                let c1 = T::one() - T::lit(beta1.powi(t));
                let c2 = T::one() - T::lit(beta2.powi(t));
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grads.0)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    for (((pv, &gv), mv), vv) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *pv -= lr * mhat / (vhat.sqrt() + e);
                    }
                }
            }
        }
    }
}
