//! Analytic gradients against central finite differences.

use isac_agent::{
    actor_loss_and_grads, critic_loss_and_grads, gaussian_noise, ActorKind, ActorNet, ActorShape, Batch, CriticPair, Matrix,
    TrainerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPE: ActorShape = ActorShape { frame_dim: 6, history: 3, action_dim: 4 };
const H: f64 = 1e-6;

fn tiny() -> TrainerConfig {
    TrainerConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_ff: 8,
        n_experts: 3,
        expert_hidden: 8,
        mlp_hidden: 8,
        critic_hidden: 8,
        ..TrainerConfig::default()
    }
}

fn batch(shape: ActorShape, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let obs = |rng: &mut ChaCha8Rng| Matrix::from_fn(n, shape.obs_dim(), |_, _| rng.random_range(-2.0..2.0));
    Batch {
        obs: obs(rng),
        actions: Matrix::from_fn(n, shape.action_dim, |_, _| rng.random_range(-0.99..0.99)),
        rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        next_obs: obs(rng),
        terminal: (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect(),
    }
}

fn agree(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8
}

/// Every `stride`-th scalar of every tensor is a probe.
fn probes(sizes: &[usize], stride: usize) -> Vec<(usize, usize)> {
    sizes.iter().enumerate().flat_map(|(t, n)| (0..*n).step_by(stride).map(move |e| (t, e))).collect()
}

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let critics = CriticPair::new(SHAPE.obs_dim(), SHAPE.action_dim, 8, &mut rng);
    let b = batch(SHAPE, 5, &mut rng);
    let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (_, grads) = critic_loss_and_grads(&critics, &b, &targets);
    let sizes: Vec<usize> = critics.params.tensors.iter().map(Matrix::len).collect();
    let mut checked = 0;
    for (t, e) in probes(&sizes, 7) {
        let loss_at = |delta: f64| {
            let mut c = critics.clone();
            c.params.tensors[t].data[e] += delta;
            critic_loss_and_grads(&c, &b, &targets).0
        };
        let numeric = (loss_at(H) - loss_at(-H)) / (2.0 * H);
        let analytic = grads[t].data[e];
        assert!(agree(analytic, numeric), "{} [{e}]: analytic {analytic} numeric {numeric}", critics.params.names[t]);
        checked += 1;
    }
    assert!(checked > 30);
}

fn check_actor(kind: ActorKind, shape: ActorShape, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny();
    let actor = ActorNet::new(kind, shape, &cfg, &mut rng);
    let critics = CriticPair::new(shape.obs_dim(), shape.action_dim, 8, &mut rng);
    let b = batch(shape, 4, &mut rng);
    let noise = gaussian_noise(4, shape.action_dim, &mut rng);
    let alpha = 0.3;
    let base = actor_loss_and_grads(&actor, &critics, &b.obs, alpha, &noise);
    let sizes: Vec<usize> = actor.params().tensors.iter().map(Matrix::len).collect();
    let mut nonzero = 0;
    for (t, e) in probes(&sizes, 5) {
        let loss_at = |delta: f64| {
            let mut a = actor.clone();
            a.params_mut().tensors[t].data[e] += delta;
            actor_loss_and_grads(&a, &critics, &b.obs, alpha, &noise).loss
        };
        let numeric = (loss_at(H) - loss_at(-H)) / (2.0 * H);
        let analytic = base.grads[t].data[e];
        assert!(agree(analytic, numeric), "{:?} {} [{e}]: analytic {analytic} numeric {numeric}", kind, actor.params().names[t]);
        if analytic != 0.0 {
            nonzero += 1;
        }
    }
    assert!(nonzero > 20, "too few informative probes: {nonzero}");
}

#[test]
fn moe_actor_loss_gradient_matches_finite_differences() {
    check_actor(ActorKind::TransformerMoe, SHAPE, 12);
}

#[test]
fn mlp_actor_loss_gradient_matches_finite_differences() {
    check_actor(ActorKind::Mlp, ActorShape { history: 1, ..SHAPE }, 13);
}

#[test]
fn gates_sum_to_one_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let actor = ActorNet::new(ActorKind::TransformerMoe, SHAPE, &TrainerConfig { n_experts: 5, ..tiny() }, &mut rng);
    let obs = Matrix::from_fn(1000, SHAPE.obs_dim(), |_, _| rng.random_range(-10.0..10.0));
    let (g, out) = actor.evaluate(&obs);
    let gates = g.value(out.gates.unwrap());
    for r in 0..gates.rows {
        let row = gates.row(r);
        assert!(row.iter().all(|p| *p >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
    let h = isac_agent::gate_entropy(gates);
    assert!((0.0..=5f64.ln()).contains(&h));
}

#[test]
fn outputs_stay_finite_for_extreme_observations() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for kind in [ActorKind::TransformerMoe, ActorKind::Mlp] {
        let actor = ActorNet::new(kind, SHAPE, &tiny(), &mut rng);
        for scale in [1e3, -1e3] {
            let obs = Matrix::from_fn(8, SHAPE.obs_dim(), |r, c| scale * if (r + c) % 2 == 0 { 1.0 } else { -0.5 });
            let (g, out) = actor.evaluate(&obs);
            assert!(g.value(out.mean).all_finite());
            assert!(g.value(out.log_std).data.iter().all(|v| (-5.0..=2.0).contains(v)));
        }
    }
}
