use std::str::FromStr;

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::invalid(format!("unknown optimizer `{s}` (sgd | adam)"))),
        }
    }
}

/// Update rule plus its per-parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Completed updates.
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, store: &ParamStore) -> Result<Self> {
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be finite and non-negative, got {learning_rate}")));
        }
        let moments = || match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        };
        Ok(Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: moments(),
            second: moments(),
        })
    }

    pub fn sgd(learning_rate: f64, store: &ParamStore) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, store)
    }

    pub fn adam(learning_rate: f64, store: &ParamStore) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate, store)
    }

    /// Applies one update from the gradients held in `store`, each scaled
    /// by `grad_scale` first.
    pub fn update(&mut self, store: &mut ParamStore, grad_scale: f64) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in store.iter_mut() {
                    for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= lr * grad_scale * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powf(self.step as f64);
                let c2 = 1.0 - b2.powf(self.step as f64);
                for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let w = p.value.data_mut();
                    for (i, &g) in p.grad.data().iter().enumerate() {
                        let g = g * grad_scale;
                        let mi = &mut m.data_mut()[i];
                        *mi = b1 * *mi + (1.0 - b1) * g;
                        let vi = &mut v.data_mut()[i];
                        *vi = b2 * *vi + (1.0 - b2) * g * g;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[2], value)).unwrap();
        s.get_mut(id).grad = Tensor::full(&[2], grad);
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store_with(1.0, 0.5);
        let mut o = Optimizer::sgd(0.1, &s).unwrap();
        o.update(&mut s, 2.0);
        assert_eq!(s.iter().next().unwrap().value.data(), &[0.9, 0.9]);
        assert_eq!(o.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // Bias correction makes the first step lr * g / (|g| + eps).
        let mut s = store_with(1.0, -3.0);
        let mut o = Optimizer::adam(1e-3, &s).unwrap();
        o.update(&mut s, 1.0);
        let w = s.iter().next().unwrap().value.data()[0];
        assert!((w - (1.0 + 1e-3 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut s = store_with(0.25, 7.0);
            let mut o = Optimizer::new(kind, 0.0, &s).unwrap();
            o.update(&mut s, 1.0);
            assert_eq!(s.iter().next().unwrap().value.data(), &[0.25, 0.25]);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let s = store_with(0.0, 0.0);
        assert!(Optimizer::sgd(-1.0, &s).is_err());
        assert!(Optimizer::adam(f64::NAN, &s).is_err());
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
