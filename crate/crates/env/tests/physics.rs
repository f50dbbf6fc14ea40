//! Physics checks against independent oracles.

use std::f64::consts::PI;

use isac_env::{
    crb_angle, dbm_to_watts, per_user_rates, project_power, sample_channels, steering_vector, sum_rate,
    BeamformerAction, CMatrix, CVector, ChannelState, IsacEnv, SystemConfig, C64,
};
use isac_reward_dsl::parse;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// CRB of θ from the numerically differentiated mean echo over explicit
/// orthogonal snapshots, inverting the full 3×3 Fisher matrix over
/// (θ, Re α, Im α).
fn numerical_fim_crb(theta: f64, alpha: C64, w: &CMatrix, noise: f64, snapshots: usize) -> f64 {
    let n = w.nrows();
    let k = w.ncols();
    assert!(k <= snapshots);
    let steer = |t: f64| -> Vec<C64> {
        (0..n).map(|i| C64::from_polar(1.0, PI * i as f64 * t.sin())).collect()
    };
    // μ_l = α·a·(aᵀ·W·s_l)
    let mean = |t: f64, al: C64| -> Vec<Vec<C64>> {
        let a = steer(t);
        (0..snapshots)
            .map(|l| {
                let x: Vec<C64> = (0..n)
                    .map(|row| {
                        (0..k)
                            .map(|col| w[(row, col)] * C64::from_polar(1.0, 2.0 * PI * (col * l) as f64 / snapshots as f64))
                            .sum()
                    })
                    .collect();
                let at_x: C64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
                a.iter().map(|ai| al * ai * at_x).collect()
            })
            .collect()
    };
    let diff = |plus: Vec<Vec<C64>>, minus: Vec<Vec<C64>>, h: f64| -> Vec<Vec<C64>> {
        plus.iter()
            .zip(&minus)
            .map(|(p, m)| p.iter().zip(m).map(|(x, y)| (x - y) / (2.0 * h)).collect())
            .collect()
    };
    let ht = 1e-5;
    let ha = 1e-3 * alpha.norm().max(1e-6);
    let d = [
        diff(mean(theta + ht, alpha), mean(theta - ht, alpha), ht),
        diff(mean(theta, alpha + ha), mean(theta, alpha - ha), ha),
        diff(mean(theta, alpha + C64::new(0.0, ha)), mean(theta, alpha - C64::new(0.0, ha)), ha),
    ];
    let mut fim = Matrix3::<f64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let s: f64 = d[i]
                .iter()
                .zip(&d[j])
                .flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x.conj() * y).re))
                .sum();
            fim[(i, j)] = 2.0 / noise * s;
        }
    }
    fim.try_inverse().expect("invertible FIM")[(0, 0)]
}

fn random_w(n: usize, k: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(n, k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn crb_closed_form_matches_numerical_fim() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let n = [2, 4, 8][case % 3];
        let k = 1 + case % 2;
        let config = SystemConfig {
            n_antennas: n,
            n_users: k,
            snapshots: rng.random_range(k.max(2)..16),
            noise_power: rng.random_range(1e-6..1e-3),
            target_angle_deg: rng.random_range(-70.0..70.0),
            target_gain: [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
            user_distances_m: vec![25.0; k],
            user_angles_deg: vec![],
            ..SystemConfig::default()
        };
        let ch = sample_channels(&config, &mut rng);
        let w = random_w(n, k, &mut rng) * C64::from(rng.random_range(0.05..1.0));
        let closed = crb_angle(&ch, &BeamformerAction::new(w.clone()), &config).unwrap();
        let oracle = numerical_fim_crb(ch.theta, ch.alpha, &w, config.noise_power, config.snapshots);
        let rel = (closed - oracle).abs() / oracle;
        assert!(rel < 1e-6, "case {case}: N={n} K={k} closed={closed:e} oracle={oracle:e} rel={rel:e}");
    }
}

/// Direct per-user SINR recomputation with explicit loops.
fn brute_force_rate(h: &[CVector], w: &CMatrix, noise: f64) -> f64 {
    let mut total = 0.0;
    for (k, hk) in h.iter().enumerate() {
        let gain = |j: usize| -> f64 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..w.nrows() {
                acc += hk[n].conj() * w[(n, j)];
            }
            acc.re * acc.re + acc.im * acc.im
        };
        let interference: f64 = (0..w.ncols()).filter(|j| *j != k).map(gain).sum();
        total += (1.0 + gain(k) / (interference + noise)).log2();
    }
    total
}

#[test]
fn sum_rate_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let k = rng.random_range(1..4);
        let config = SystemConfig {
            n_antennas: rng.random_range(k..9),
            n_users: k,
            user_distances_m: (0..k).map(|_| rng.random_range(5.0..60.0)).collect(),
            user_angles_deg: vec![],
            ..SystemConfig::default()
        };
        let ch = sample_channels(&config, &mut rng);
        let w = random_w(config.n_antennas, k, &mut rng) * C64::from(0.1);
        let fast = sum_rate(&ch, &BeamformerAction::new(w.clone()), config.noise_power);
        let slow = brute_force_rate(&ch.h, &w, config.noise_power);
        assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
    }
}

fn mrt(ch: &ChannelState, p: f64) -> BeamformerAction {
    let k = ch.h.len();
    let n = ch.h[0].len();
    let w = CMatrix::from_fn(n, k, |row, col| ch.h[col][row] / C64::from(ch.h[col].norm()) * C64::from((p / k as f64).sqrt()));
    BeamformerAction::new(w)
}

#[test]
fn mrt_single_user_closed_form() {
    let config = SystemConfig {
        n_users: 1,
        user_distances_m: vec![1.0],
        user_angles_deg: vec![10.0],
        noise_power: 1.0,
        ..SystemConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let ch = sample_channels(&config, &mut rng);
        let p = rng.random_range(0.1..10.0);
        let rate = sum_rate(&ch, &mrt(&ch, p), 1.0);
        let expected = (1.0 + p * ch.h[0].norm_squared()).log2();
        assert!((rate - expected).abs() <= 1e-9, "{rate} vs {expected}");
    }
}

#[test]
fn rate_increases_with_power_for_mrt() {
    let config = SystemConfig { n_users: 1, user_distances_m: vec![30.0], user_angles_deg: vec![5.0], ..SystemConfig::default() };
    let ch = sample_channels(&config, &mut ChaCha8Rng::seed_from_u64(8));
    let rates: Vec<f64> = (0..10).map(|i| sum_rate(&ch, &mrt(&ch, dbm_to_watts(5.0 + 3.0 * i as f64)), config.noise_power)).collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
}

#[test]
fn crb_decreases_with_power_for_target_beam() {
    let config = SystemConfig::default();
    let ch = sample_channels(&config, &mut ChaCha8Rng::seed_from_u64(8));
    // Rank-1 beam matched to the target: A·w ∝ a when w ∝ conj(a).
    let a = steering_vector(config.n_antennas, ch.theta);
    let dir = a.map(|v| v.conj()) / C64::from((config.n_antennas as f64).sqrt());
    let crbs: Vec<f64> = (0..10)
        .map(|i| {
            let p = dbm_to_watts(5.0 + 3.0 * i as f64);
            let w = CMatrix::from_fn(config.n_antennas, config.n_users, |r, c| {
                if c == 0 { dir[r] * C64::from(p.sqrt()) } else { C64::new(0.0, 0.0) }
            });
            crb_angle(&ch, &BeamformerAction::new(w), &config).unwrap()
        })
        .collect();
    assert!(crbs.windows(2).all(|w| w[1] < w[0]), "{crbs:?}");
}

#[test]
fn trajectories_are_bit_identical() {
    let reward = parse("rate - log10(crb)").unwrap();
    let run = || {
        let mut env = IsacEnv::new(SystemConfig { user_angles_deg: vec![], ..SystemConfig::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut trace = Vec::new();
        for episode in 0..3 {
            let obs = env.reset(1000 + episode);
            trace.extend(obs.features);
            loop {
                let a: Vec<f64> = (0..env.config().action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let out = env.step(&a, &reward).unwrap();
                trace.extend(out.observation.features.iter().copied());
                trace.push(out.reward);
                assert!(out.observation.features.iter().all(|v| v.is_finite()));
                assert_eq!(out.observation.len(), env.config().observation_dim());
                if out.done {
                    break;
                }
            }
        }
        trace.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn projection_is_feasible_and_parallel(
        entries in proptest::collection::vec(-100.0f64..100.0, 16),
        p_dbm in -10.0f64..40.0,
    ) {
        let p = dbm_to_watts(p_dbm);
        let raw = BeamformerAction::from_raw(&entries, 4, 2);
        let out = project_power(raw.w.clone(), p);
        prop_assert!(out.power() <= p + 1e-12 * p.max(1.0));
        // Parallel: out = c·in for a single real c ∈ (0, 1].
        let c = out.w.norm() / raw.w.norm().max(1e-300);
        prop_assert!(c <= 1.0 + 1e-12);
        prop_assert!((out.w.clone() - raw.w.clone() * C64::from(c)).norm() <= 1e-12 * raw.w.norm().max(1.0));
    }

    #[test]
    fn per_user_rates_are_non_negative(seed in any::<u64>()) {
        let config = SystemConfig { user_angles_deg: vec![], ..SystemConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = sample_channels(&config, &mut rng);
        let w = random_w(config.n_antennas, config.n_users, &mut rng);
        prop_assert!(per_user_rates(&ch, &BeamformerAction::new(w), config.noise_power).iter().all(|r| *r >= 0.0));
    }
}
