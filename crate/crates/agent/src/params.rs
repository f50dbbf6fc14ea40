use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::tensor::Matrix;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors of one network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform `±√(6/(fan_in+fan_out))` weights.
    pub fn add_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> ParamId {
        let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit));
        self.add(name, m)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Records every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound(self.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect())
    }

    /// `self ← τ·online + (1−τ)·self`.
    pub fn polyak_from(&mut self, online: &ParamSet, tau: f64) {
        assert_eq!(self.tensors.len(), online.tensors.len(), "parameter layout");
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::all_finite)
    }

    /// Checks that `other` has the same names and shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape() == b.shape())
    }
}

/// Graph handles of a bound [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    /// Gradients after [`Graph::backward`]; zeros for tensors the loss did
    /// not reach.
    pub fn grads(&self, g: &Graph, set: &ParamSet) -> Vec<Matrix> {
        self.0
            .iter()
            .zip(&set.tensors)
            .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Matrix::zeros(t.rows, t.cols)))
            .collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let zeros = || params.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Matrix]) {
        assert_eq!(grads.len(), params.tensors.len(), "gradient count");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.tensors.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Adam on a single scalar (the SAC temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub lr: f64,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        ScalarAdam { lr, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, value: &mut f64, grad: f64) {
        self.step += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let mh = self.m / (1.0 - 0.9f64.powi(self.step as i32));
        let vh = self.v / (1.0 - 0.999f64.powi(self.step as i32));
        *value -= self.lr * mh / (vh.sqrt() + 1e-8);
    }
}
