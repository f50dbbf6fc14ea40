use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::array::steering_vector;
use crate::config::SystemConfig;
use crate::{CVector, C64};

/// LoS angles drawn at reset when the config does not pin them, degrees.
const LOS_ANGLE_RANGE_DEG: f64 = 60.0;

/// Downlink channels plus the sensing target.
///
/// Each channel is `h_k = √PL_k·(√(κ/(1+κ))·a(φ_k) + √(1/(1+κ))·g_k)`; the
/// LoS angles `φ_k` and scattered parts `g_k` are kept so the fading can
/// evolve while the geometry stays fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub h: Vec<CVector>,
    pub los_angles: Vec<f64>,
    pub scatter: Vec<CVector>,
    /// Target angle, radians.
    pub theta: f64,
    pub alpha: C64,
}

impl ChannelState {
    fn assemble(config: &SystemConfig, los_angles: Vec<f64>, scatter: Vec<CVector>) -> Self {
        let kappa = config.rician_k;
        // Written as weights so κ = ∞ is never formed.
        let los_w = (kappa / (1.0 + kappa)).sqrt();
        let nlos_w = (1.0 / (1.0 + kappa)).sqrt();
        let h = los_angles
            .iter()
            .zip(&scatter)
            .enumerate()
            .map(|(k, (phi, g))| {
                let a = steering_vector(config.n_antennas, *phi);
                (a * C64::from(los_w) + g * C64::from(nlos_w)) * C64::from(config.path_loss(k).sqrt())
            })
            .collect();
        ChannelState {
            h,
            los_angles,
            scatter,
            theta: config.target_angle_rad(),
            alpha: config.target_gain(),
        }
    }

    /// `[Re h_0 .. Re h_{K-1}, Im h_0 .. Im h_{K-1}]`, antenna index fastest.
    pub fn flatten(&self) -> Vec<f64> {
        let re = self.h.iter().flat_map(|h| h.iter().map(|v| v.re));
        let im = self.h.iter().flat_map(|h| h.iter().map(|v| v.im));
        re.chain(im).collect()
    }
}

fn complex_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        }),
    )
}

/// Draws a fresh channel realization. LoS angles come from the config when
/// pinned there and from `rng` otherwise; the scattered parts are i.i.d.
/// unit-variance circular Gaussian, drawn after any angles.
pub fn sample_channels<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ChannelState {
    let los_angles: Vec<f64> = if config.user_angles_deg.is_empty() {
        (0..config.n_users)
            .map(|_| rng.random_range(-LOS_ANGLE_RANGE_DEG..LOS_ANGLE_RANGE_DEG).to_radians())
            .collect()
    } else {
        config.user_angles_deg.iter().map(|d| d.to_radians()).collect()
    };
    let scatter = (0..config.n_users).map(|_| complex_gaussian(config.n_antennas, rng)).collect();
    ChannelState::assemble(config, los_angles, scatter)
}

/// One Gauss–Markov step of the scattered parts,
/// `g ← ρ·g + √(1−ρ²)·e`. Geometry and target are untouched.
pub fn evolve_channels<R: Rng + ?Sized>(
    state: &ChannelState,
    config: &SystemConfig,
    rng: &mut R,
) -> ChannelState {
    let rho = config.channel_corr;
    let innovation = (1.0 - rho * rho).sqrt();
    let scatter = state
        .scatter
        .iter()
        .map(|g| {
            let e = complex_gaussian(config.n_antennas, rng);
            g * C64::from(rho) + e * C64::from(innovation)
        })
        .collect();
    ChannelState::assemble(config, state.los_angles.clone(), scatter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rayleigh() -> SystemConfig {
        SystemConfig { rician_k: 0.0, ..SystemConfig::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = SystemConfig { user_angles_deg: vec![], ..SystemConfig::default() };
        let a = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let d = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(4));
        assert_ne!(a, d);
    }

    #[test]
    fn pure_los_limit() {
        let c = SystemConfig { rician_k: 1e9, ..SystemConfig::default() };
        let s = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(1));
        for (k, h) in s.h.iter().enumerate() {
            let amp = c.path_loss(k).sqrt();
            for v in h.iter() {
                assert!((v.norm() - amp).abs() < 1e-3 * amp, "{} vs {amp}", v.norm());
            }
        }
    }

    #[test]
    fn rayleigh_mean_power() {
        let c = rayleigh();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut acc = vec![0.0; c.n_users];
        for _ in 0..draws {
            let s = sample_channels(&c, &mut rng);
            for (k, h) in s.h.iter().enumerate() {
                acc[k] += h.norm_squared() / (c.n_antennas as f64 * c.path_loss(k));
            }
        }
        for a in acc {
            let mean = a / draws as f64;
            assert!((0.95..=1.05).contains(&mean), "{mean}");
        }
    }

    #[test]
    fn full_correlation_freezes_channels() {
        let c = SystemConfig { channel_corr: 1.0, ..SystemConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_channels(&c, &mut rng);
        let next = evolve_channels(&s, &c, &mut rng);
        assert_eq!(next.h, s.h);
    }

    #[test]
    fn zero_correlation_redraws_scatter() {
        let c = SystemConfig { channel_corr: 0.0, ..SystemConfig::default() };
        let first = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(9));
        let s = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(1));
        let next = evolve_channels(&s, &c, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(next.scatter, first.scatter);
        assert_eq!(next.los_angles, s.los_angles);
    }

    #[test]
    fn stationary_variance_is_preserved() {
        let c = SystemConfig { channel_corr: 0.9, ..rayleigh() };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut s = sample_channels(&c, &mut rng);
        let steps = 1000;
        let mut acc = 0.0;
        for _ in 0..steps {
            s = evolve_channels(&s, &c, &mut rng);
            acc += s.scatter.iter().map(|g| g.norm_squared()).sum::<f64>();
        }
        let mean = acc / (steps * c.n_users * c.n_antennas) as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn flatten_layout() {
        let c = SystemConfig::default();
        let s = sample_channels(&c, &mut ChaCha8Rng::seed_from_u64(2));
        let flat = s.flatten();
        let nk = c.n_antennas * c.n_users;
        assert_eq!(flat.len(), 2 * nk);
        assert_eq!(flat[c.n_antennas + 1], s.h[1][1].re);
        assert_eq!(flat[nk + c.n_antennas + 1], s.h[1][1].im);
    }
}
