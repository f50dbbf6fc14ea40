use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::layers::Mlp;
use crate::params::{Bound, ParamSet};
use crate::tensor::Matrix;

/// Twin Q-networks over `[observation, action]` sharing one parameter set,
/// plus Polyak-averaged target copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub params: ParamSet,
    pub target: ParamSet,
    q1: Mlp,
    q2: Mlp,
}

impl CriticPair {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let widths = [obs_dim + action_dim, hidden, hidden, 1];
        let q1 = Mlp::new(&mut params, "q1", &widths, 1.0, rng);
        let q2 = Mlp::new(&mut params, "q2", &widths, 1.0, rng);
        let target = params.clone();
        CriticPair { params, target, q1, q2 }
    }

    /// `(Q₁, Q₂)`, each `batch × 1`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, obs: Var, action: Var) -> (Var, Var) {
        let x = g.concat_cols(&[obs, action]);
        (self.q1.forward(g, p, x), self.q2.forward(g, p, x))
    }

    /// `min(Q₁′, Q₂′)` under the target parameters, without gradients.
    pub fn target_min(&self, obs: &Matrix, action: &Matrix) -> Vec<f64> {
        let mut g = Graph::new();
        let p = self.target.bind(&mut g, false);
        let o = g.constant(obs.clone());
        let a = g.constant(action.clone());
        let (q1, q2) = self.forward(&mut g, &p, o, a);
        let m = g.min(q1, q2);
        g.value(m).data.clone()
    }

    pub fn soft_update(&mut self, tau: f64) {
        self.target.polyak_from(&self.params, tau);
    }
}
