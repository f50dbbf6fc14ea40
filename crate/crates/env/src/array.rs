use std::f64::consts::PI;

use crate::{CVector, C64};

/// ULA response toward `theta` (radians): element `n` is `exp(j·π·n·sin θ)`.
pub fn steering_vector(n_antennas: usize, theta: f64) -> CVector {
    let s = theta.sin();
    CVector::from_iterator(n_antennas, (0..n_antennas).map(|n| C64::from_polar(1.0, PI * n as f64 * s)))
}

/// Derivative of [`steering_vector`] with respect to `theta`.
pub fn steering_derivative(n_antennas: usize, theta: f64) -> CVector {
    let (s, c) = theta.sin_cos();
    CVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|n| {
            let k = PI * n as f64;
            C64::new(0.0, k * c) * C64::from_polar(1.0, k * s)
        }),
    )
}
