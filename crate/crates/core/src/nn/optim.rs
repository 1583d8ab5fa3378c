use std::collections::BTreeMap;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::autograd::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

/// Hyperparameters recorded alongside optimizer state in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSprop squared-gradient decay.
    pub rho: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Rmsprop,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-7,
        }
    }

    pub fn of_kind(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(learning_rate),
            OptimizerKind::Rmsprop => Self::rmsprop(learning_rate),
        }
    }
}

/// First/second moment buffers per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    pub first: ParamSet,
    pub second: ParamSet,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            first: ParamSet::new(),
            second: ParamSet::new(),
        }
    }

    /// One update of every parameter that has a gradient in `grads`.
    pub fn update(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else {
                continue;
            };
            if self.second.get(name).is_none() {
                self.first.insert(name.clone(), Tensor::zeros(g.raw_dim()));
                self.second.insert(name.clone(), Tensor::zeros(g.raw_dim()));
            }
            let m = self.first.get_mut(name).unwrap();
            match c.kind {
                OptimizerKind::Adam => {
                    Zip::from(&mut *m).and(g).for_each(|m, &g| {
                        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    });
                    let v = self.second.get_mut(name).unwrap();
                    Zip::from(&mut *v).and(g).for_each(|v, &g| {
                        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    });
                    let m = self.first.get(name).unwrap();
                    let v = self.second.get(name).unwrap();
                    Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
                        *p -= c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.eps);
                    });
                }
                OptimizerKind::Rmsprop => {
                    let v = self.second.get_mut(name).unwrap();
                    Zip::from(&mut *v).and(g).for_each(|v, &g| {
                        *v = c.rho * *v + (1.0 - c.rho) * g * g;
                    });
                    let v = self.second.get(name).unwrap();
                    Zip::from(p).and(g).and(v).for_each(|p, &g, &v| {
                        *p -= c.learning_rate * g / (v.sqrt() + c.eps);
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn quadratic_descends(config: OptimizerConfig) {
        let mut p = ParamSet::new();
        p.insert("x", ArrayD::from_elem(IxDyn(&[3]), 2.0));
        let mut opt = Optimizer::new(config);
        for _ in 0..500 {
            let g: BTreeMap<_, _> = p.iter().map(|(k, v)| (k.clone(), v * 2.0)).collect();
            opt.update(&mut p, &g);
        }
        assert!(p.get("x").unwrap().iter().all(|x| x.abs() < 0.05), "{p:?}");
    }

    #[test]
    fn adam_minimizes_quadratic() {
        quadratic_descends(OptimizerConfig::adam(0.02));
    }

    #[test]
    fn rmsprop_minimizes_quadratic() {
        quadratic_descends(OptimizerConfig::rmsprop(0.01));
    }

    #[test]
    fn zero_gradient_means_no_update() {
        let mut p = ParamSet::new();
        p.insert("x", ArrayD::from_elem(IxDyn(&[2]), 1.5));
        let before = p.clone();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.002));
        let g: BTreeMap<_, _> = [("x".to_string(), ArrayD::zeros(IxDyn(&[2])))].into();
        opt.update(&mut p, &g);
        assert_eq!(p, before);
    }
}
