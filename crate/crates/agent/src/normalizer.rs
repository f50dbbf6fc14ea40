use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

/// Per-feature affine normalisation of stacked frames. Statistics are
/// shared across frame positions and frozen once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub frame_dim: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Features whose spread is below this are only centred.
const MIN_STD: f64 = 1e-8;

impl ObsNormalizer {
    pub fn identity(frame_dim: usize) -> Self {
        ObsNormalizer { frame_dim, mean: vec![0.0; frame_dim], std: vec![1.0; frame_dim] }
    }

    /// Fits mean and standard deviation of every frame feature over all
    /// frames of all observations.
    pub fn fit<'a>(frame_dim: usize, observations: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; frame_dim];
        let mut sq = vec![0.0; frame_dim];
        for obs in observations {
            assert_eq!(obs.len() % frame_dim, 0, "observation is not whole frames");
            for frame in obs.chunks(frame_dim) {
                count += 1;
                for (i, v) in frame.iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
        }
        if count == 0 {
            return ObsNormalizer::identity(frame_dim);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let s = (q / n - m * m).max(0.0).sqrt();
                if s < MIN_STD { 1.0 } else { s }
            })
            .collect();
        ObsNormalizer { frame_dim, mean, std }
    }

    pub fn apply(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .enumerate()
            .map(|(i, v)| {
                let f = i % self.frame_dim;
                (v - self.mean[f]) / self.std[f]
            })
            .collect()
    }

    /// Normalises a batch of observations into one row each.
    pub fn batch<'a>(&self, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Matrix {
        let n = rows.len();
        let mut data = Vec::new();
        let mut cols = 0;
        for r in rows {
            cols = r.len();
            data.extend(self.apply(r));
        }
        Matrix::from_vec(n, cols, data)
    }
}
