use thiserror::Error;

use crate::array::{steering_derivative, steering_vector};
use crate::channel::ChannelState;
use crate::config::SystemConfig;
use crate::{CMatrix, CVector, C64};

/// Guard on the illumination terms of the CRB denominator.
pub const ILLUMINATION_EPSILON: f64 = 1e-12;
/// Leading constant of the angle Fisher information, `2·|α|²·L/σ²`.
pub const CRB_FISHER_CONSTANT: f64 = 2.0;

/// Complex `N×K` precoder; column `k` carries user `k`'s stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerAction {
    pub w: CMatrix,
}

impl BeamformerAction {
    pub fn new(w: CMatrix) -> Self {
        BeamformerAction { w }
    }

    /// Reads the raw action layout: the first `N·K` reals are the real
    /// parts, the last `N·K` the imaginary parts, antenna index fastest.
    pub fn from_raw(raw: &[f64], n_antennas: usize, n_users: usize) -> Self {
        let nk = n_antennas * n_users;
        assert_eq!(raw.len(), 2 * nk, "raw action length");
        let w = CMatrix::from_fn(n_antennas, n_users, |n, k| {
            let i = k * n_antennas + n;
            C64::new(raw[i], raw[nk + i])
        });
        BeamformerAction { w }
    }

    /// Inverse of [`BeamformerAction::from_raw`].
    pub fn to_raw(&self) -> Vec<f64> {
        // nalgebra storage is column-major, matching the raw layout.
        let re = self.w.iter().map(|v| v.re);
        let im = self.w.iter().map(|v| v.im);
        re.chain(im).collect()
    }

    /// `‖W‖_F²`, W.
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// Projects onto the Frobenius ball of radius `√p_max` by uniform scaling.
/// An all-zero precoder passes through unchanged.
pub fn project_power(w: CMatrix, p_max: f64) -> BeamformerAction {
    assert!(p_max > 0.0, "power budget must be positive");
    let norm = w.norm();
    if norm == 0.0 || norm * norm <= p_max {
        return BeamformerAction { w };
    }
    let scale = p_max.sqrt() / norm;
    BeamformerAction { w: w * C64::from(scale) }
}

/// Per-user achievable rates `log2(1 + SINR_k)`, bits/s/Hz.
pub fn per_user_rates(channels: &ChannelState, action: &BeamformerAction, noise_power: f64) -> Vec<f64> {
    let k_users = action.w.ncols();
    channels
        .h
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for j in 0..k_users {
                let g = h.dotc(&action.w.column(j)).norm_sqr();
                if j == k {
                    signal = g;
                } else {
                    interference += g;
                }
            }
            (1.0 + signal / (interference + noise_power)).log2()
        })
        .collect()
}

pub fn sum_rate(channels: &ChannelState, action: &BeamformerAction, noise_power: f64) -> f64 {
    per_user_rates(channels, action, noise_power).iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CrbError {
    #[error("unobservable target: the beam delivers no usable energy toward it")]
    Unobservable,
}

/// Cramér–Rao bound on the target angle (rad²) for a monostatic point
/// target with unknown complex gain.
///
/// With `A = a·aᵀ`, `Ȧ = ȧ·aᵀ + a·ȧᵀ` and `R = W·Wᴴ`:
///
/// ```text
/// CRB = σ² / (2·|α|²·L·(tr(Ȧ R Ȧᴴ) − |tr(Ȧ R Aᴴ)|² / tr(A R Aᴴ)))
/// ```
pub fn crb_angle(channels: &ChannelState, action: &BeamformerAction, config: &SystemConfig) -> Result<f64, CrbError> {
    crb_angle_with_constant(channels, action, config, CRB_FISHER_CONSTANT)
}

/// [`crb_angle`] with the Fisher-information constant exposed; used by the
/// self-test to check that a perturbed formula is caught.
#[doc(hidden)]
pub fn crb_angle_with_constant(
    channels: &ChannelState,
    action: &BeamformerAction,
    config: &SystemConfig,
    fisher_constant: f64,
) -> Result<f64, CrbError> {
    let n = action.w.nrows();
    let a = steering_vector(n, channels.theta);
    let a_dot = steering_derivative(n, channels.theta);
    let mut t_dd = 0.0; // tr(Ȧ R Ȧᴴ)
    let mut t_da = C64::new(0.0, 0.0); // tr(Ȧ R Aᴴ)
    let mut t_aa = 0.0; // tr(A R Aᴴ)
    let a_norm2 = a.norm_squared();
    for w in action.w.column_iter() {
        // A·w = u·a and Ȧ·w = u·ȧ + v·a, with u = aᵀw and v = ȧᵀw.
        let u = a.dot(&w);
        let v = a_dot.dot(&w);
        let aw: CVector = &a * u;
        let adw: CVector = &a_dot * u + &a * v;
        t_dd += adw.norm_squared();
        t_da += aw.dotc(&adw);
        t_aa += u.norm_sqr() * a_norm2;
    }
    if t_aa <= ILLUMINATION_EPSILON {
        return Err(CrbError::Unobservable);
    }
    let effective = t_dd - t_da.norm_sqr() / t_aa;
    let gain = channels.alpha.norm_sqr();
    if effective <= ILLUMINATION_EPSILON || gain == 0.0 {
        return Err(CrbError::Unobservable);
    }
    Ok(config.noise_power / (fisher_constant * gain * config.snapshots as f64 * effective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(h: &[f64]) -> ChannelState {
        ChannelState {
            h: vec![CVector::from_iterator(h.len(), h.iter().map(|v| C64::from(*v)))],
            los_angles: vec![0.0],
            scatter: vec![CVector::zeros(h.len())],
            theta: 0.3,
            alpha: C64::new(0.01, 0.0),
        }
    }

    fn random_w(n: usize, k: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(n, k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn projection_scales_down_only() {
        let w = CMatrix::from_element(2, 2, C64::new(1.0, 0.0)); // ‖W‖² = 4
        let p = project_power(w.clone(), 1.0);
        assert!((p.w.clone() - w.clone() * C64::from(0.5)).norm() < 1e-15);
        let small = CMatrix::from_element(2, 2, C64::new(0.5f64.sqrt() / 2.0, 0.0));
        assert_eq!(project_power(small.clone(), 1.0).w, small);
        let zero = CMatrix::zeros(3, 2);
        assert_eq!(project_power(zero.clone(), 1.0).w, zero);
    }

    #[test]
    fn raw_layout_round_trip() {
        let raw: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let a = BeamformerAction::from_raw(&raw, 3, 2);
        assert_eq!(a.w[(1, 0)], C64::new(1.0, 7.0));
        assert_eq!(a.w[(0, 1)], C64::new(3.0, 9.0));
        assert_eq!(a.to_raw(), raw);
    }

    #[test]
    fn trivial_rates() {
        let ch = single(&[1.0, 0.0]);
        let w = BeamformerAction::new(CMatrix::from_column_slice(2, 1, &[C64::from(1.0), C64::from(0.0)]));
        assert_eq!(sum_rate(&ch, &w, 1.0), 1.0);

        let mut ch2 = single(&[1.0, 0.0]);
        ch2.h.push(CVector::from_column_slice(&[C64::from(0.0), C64::from(1.0)]));
        let eye = BeamformerAction::new(CMatrix::identity(2, 2));
        assert_eq!(sum_rate(&ch2, &eye, 1.0), 2.0);
        assert_eq!(sum_rate(&ch2, &BeamformerAction::new(CMatrix::zeros(2, 2)), 1.0), 0.0);
    }

    #[test]
    fn crb_scaling_laws() {
        let config = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = sample_channels(&config, &mut rng);
        let w = random_w(config.n_antennas, config.n_users, &mut rng);
        let base = crb_angle(&ch, &BeamformerAction::new(w.clone()), &config).unwrap();
        assert!(base > 0.0);

        let noisy = SystemConfig { noise_power: 2.0 * config.noise_power, ..config.clone() };
        let doubled = crb_angle(&ch, &BeamformerAction::new(w.clone()), &noisy).unwrap();
        assert_eq!(doubled, 2.0 * base);

        let louder = crb_angle(&ch, &BeamformerAction::new(w * C64::from(2.0)), &config).unwrap();
        assert!((louder - base / 4.0).abs() <= 1e-12 * base);
    }

    #[test]
    fn crb_unobservable_without_illumination() {
        let config = SystemConfig::default();
        let ch = sample_channels(&config, &mut ChaCha8Rng::seed_from_u64(1));
        let zero = BeamformerAction::new(CMatrix::zeros(config.n_antennas, config.n_users));
        assert_eq!(crb_angle(&ch, &zero, &config), Err(CrbError::Unobservable));

        // A beam orthogonal to a(θ)* puts no energy on the target.
        let a = steering_vector(config.n_antennas, ch.theta);
        let mut w = CMatrix::zeros(config.n_antennas, config.n_users);
        w[(0, 0)] = a[1];
        w[(1, 0)] = -a[0];
        assert_eq!(crb_angle(&ch, &BeamformerAction::new(w), &config), Err(CrbError::Unobservable));
    }
}
