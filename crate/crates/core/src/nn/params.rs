use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::autograd::{Graph, Tensor, Var};

/// Named tensors in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.map {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Every tensor as a leaf on `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), graph.leaf(v.clone())))
                .collect(),
        }
    }

    pub fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for t in self.map.values_mut() {
            t.mapv_inplace(&f);
        }
    }
}

/// Parameters bound to graph leaves for one forward/backward pass.
pub struct Bound<'g> {
    vars: BTreeMap<String, Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Var<'g> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'g>)> {
        self.vars.iter()
    }

    /// `(names, vars)` in sorted order.
    pub fn all(&self) -> (Vec<String>, Vec<Var<'g>>) {
        self.vars.iter().map(|(k, v)| (k.clone(), *v)).unzip()
    }

    /// Gradients of `loss` with respect to every bound parameter, as values.
    pub fn grads(&self, graph: &'g Graph, loss: Var<'g>) -> BTreeMap<String, Tensor> {
        let (names, vars) = self.all();
        let grads = graph.grad(loss, &vars);
        names
            .into_iter()
            .zip(grads)
            .map(|(n, g)| (n, (*g.value()).clone()))
            .collect()
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-bound..bound))
}

/// `blocks` stacked `n x n` orthogonal matrices, shape `[blocks * n, n]`.
pub fn orthogonal_blocks(blocks: usize, n: usize, rng: &mut impl Rng) -> Tensor {
    let mut out = ArrayD::zeros(IxDyn(&[blocks * n, n]));
    for b in 0..blocks {
        // modified Gram-Schmidt on the rows of a Gaussian matrix
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        for i in 0..n {
            for j in 0..i {
                let (head, tail) = rows.split_at_mut(i);
                let dot: f64 = tail[0].iter().zip(&head[j]).map(|(a, b)| a * b).sum();
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= dot * y;
                }
            }
            let norm = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            rows[i].iter_mut().for_each(|x| *x /= norm);
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[[b * n + i, j]] = v;
            }
        }
    }
    out
}
