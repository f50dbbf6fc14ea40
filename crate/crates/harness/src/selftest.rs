//! `selftest`: oracle checks that need no artifacts.

use std::f64::consts::PI;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use isac_agent::{
    actor_loss_and_grads, critic_loss_and_grads, evaluate_policy, gate_entropy, gaussian_noise, metrics_csv, train,
    ActorKind, ActorNet, ActorShape, Batch, CriticPair, Matrix, RandomPolicy, TrainerConfig,
};
use isac_env::{
    crb_angle_with_constant, dbm_to_watts, project_power, sample_channels, sum_rate, BeamformerAction, CMatrix, CVector,
    ChannelState, IsacEnv, SystemConfig, C64, CRB_FISHER_CONSTANT,
};
use isac_reward_dsl::{evaluate, parse, BinaryOp, Feature, FeatureMap, Node, RewardExpr, UnaryOp};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:<18} {:>8.2}s  {}", self.name, self.elapsed.as_secs_f64(), self.detail)
    }
}

fn timed(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|_| Err("panicked".to_string()));
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult { name, passed, detail, elapsed: start.elapsed() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    /// Fisher-information constant handed to the closed-form CRB; any
    /// value other than the real one must make the oracle check fail.
    pub crb_constant: f64,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { crb_constant: CRB_FISHER_CONSTANT, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    SelftestReport {
        checks: vec![
            crb_oracle(50, 1e-6, opts.crb_constant, opts.seed),
            physics_checks(opts.seed),
            gradient_check(1e-4, opts.seed),
            gate_check(1000, 1e-6, opts.seed),
            parser_fuzz(10_000, 1_000, opts.seed),
            determinism_probe(opts.seed),
        ],
    }
}

/// `θ`-CRB from a brute-force Fisher matrix: the echo mean
/// `μ = α·a(θ)·a(θ)ᵀ·X` with `X = √L·W` (so `X·Xᴴ = L·W·Wᴴ`) is
/// differentiated numerically in `(θ, Re α, Im α)`, the 3×3 matrix
/// `F_ij = 2/σ²·Re Σ conj(∂_i μ)·∂_j μ` is inverted and the `θθ` entry
/// returned.
pub fn numerical_crb(theta: f64, alpha: C64, w: &CMatrix, noise_power: f64, snapshots: usize) -> Option<f64> {
    let (n, k) = w.shape();
    let x = w * C64::from((snapshots as f64).sqrt());
    let mean = |t: f64, a: C64| -> Vec<C64> {
        let s: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, PI * i as f64 * t.sin())).collect();
        let mut out = Vec::with_capacity(n * k);
        for col in 0..k {
            let proj: C64 = (0..n).map(|i| s[i] * x[(i, col)]).sum();
            out.extend(s.iter().map(|si| a * si * proj));
        }
        out
    };
    let central = |plus: Vec<C64>, minus: Vec<C64>, h: f64| -> Vec<C64> {
        plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    };
    let ht = 1e-5;
    let ha = 1e-3 * alpha.norm();
    let d = [
        central(mean(theta + ht, alpha), mean(theta - ht, alpha), ht),
        central(mean(theta, alpha + ha), mean(theta, alpha - ha), ha),
        central(mean(theta, alpha + C64::new(0.0, ha)), mean(theta, alpha - C64::new(0.0, ha)), ha),
    ];
    let fim = Matrix3::from_fn(|i, j| 2.0 / noise_power * d[i].iter().zip(&d[j]).map(|(u, v)| (u.conj() * v).re).sum::<f64>());
    fim.try_inverse().map(|inv| inv[(0, 0)])
}

fn random_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Closed-form CRB against [`numerical_crb`] on random instances with
/// `N ∈ {2, 4, 8}` and `K ∈ {1, 2}`.
pub fn crb_oracle(cases: usize, tolerance: f64, fisher_constant: f64, seed: u64) -> CheckResult {
    timed("crb_oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4B);
        let mut worst = 0.0f64;
        for case in 0..cases {
            let n = [2, 4, 8][case % 3];
            let k = 1 + (case / 3) % 2;
            let config = SystemConfig {
                n_antennas: n,
                n_users: k,
                snapshots: rng.random_range(k.max(2)..=64),
                noise_power: 10f64.powf(rng.random_range(-6.0..-2.0)),
                target_angle_deg: rng.random_range(-60.0..60.0),
                target_gain: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                user_distances_m: vec![25.0; k],
                user_angles_deg: (0..k).map(|u| -30.0 + 40.0 * u as f64).collect(),
                ..SystemConfig::default()
            };
            let channels = sample_channels(&config, &mut rng);
            let w = random_complex(n, k, &mut rng);
            let closed = crb_angle_with_constant(&channels, &BeamformerAction::new(w.clone()), &config, fisher_constant)
                .map_err(|e| format!("case {case}: closed form failed: {e}"))?;
            let numeric = numerical_crb(channels.theta, channels.alpha, &w, config.noise_power, config.snapshots)
                .ok_or_else(|| format!("case {case}: singular Fisher matrix"))?;
            let rel = (closed - numeric).abs() / numeric.abs();
            worst = worst.max(rel);
            if rel.is_nan() || rel > tolerance {
                return Err(format!("case {case} (N={n}, K={k}): closed {closed:e} vs numerical {numeric:e}, rel {rel:.3e}"));
            }
        }
        Ok(format!("{cases} instances, worst rel error {worst:.2e} (tol {tolerance:e})"))
    })
}

fn single_channel(h: Vec<Vec<C64>>) -> ChannelState {
    let k = h.len();
    ChannelState {
        h: h.into_iter().map(CVector::from_vec).collect(),
        los_angles: vec![0.0; k],
        scatter: vec![],
        theta: 0.3,
        alpha: C64::new(0.1, 0.0),
    }
}

/// Closed-form cases of the rate, projection feasibility, noise
/// linearity of the CRB and the single-user matched-filter rate.
pub fn physics_checks(seed: u64) -> CheckResult {
    timed("physics", || {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let ch = single_channel(vec![vec![one, zero]]);
        let r1 = sum_rate(&ch, &BeamformerAction::new(CMatrix::from_column_slice(2, 1, &[one, zero])), 1.0);
        if (r1 - 1.0).abs() > 1e-12 {
            return Err(format!("single-user unit SINR rate {r1}"));
        }
        let ch = single_channel(vec![vec![one, zero], vec![zero, one]]);
        let r2 = sum_rate(&ch, &BeamformerAction::new(CMatrix::identity(2, 2)), 1.0);
        if (r2 - 2.0).abs() > 1e-12 {
            return Err(format!("orthogonal two-user rate {r2}"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9A5);
        for i in 0..1000 {
            let (n, k) = (rng.random_range(1..=8), rng.random_range(1..=4));
            let w = random_complex(n, k, &mut rng) * C64::from(10f64.powf(rng.random_range(-3.0..3.0)));
            let p_max = 10f64.powf(rng.random_range(-4.0..2.0));
            let out = project_power(w, p_max);
            if out.power() > p_max + 1e-12 {
                return Err(format!("projection {i}: power {} > {p_max}", out.power()));
            }
        }

        let mut worst_lin = 0.0f64;
        for _ in 0..20 {
            let config = SystemConfig { user_angles_deg: vec![], ..SystemConfig::default() };
            let channels = sample_channels(&config, &mut rng);
            let action = BeamformerAction::new(random_complex(4, 2, &mut rng));
            let base = crb_angle_with_constant(&channels, &action, &config, CRB_FISHER_CONSTANT).map_err(|e| e.to_string())?;
            let doubled = SystemConfig { noise_power: 2.0 * config.noise_power, ..config.clone() };
            let twice = crb_angle_with_constant(&channels, &action, &doubled, CRB_FISHER_CONSTANT).map_err(|e| e.to_string())?;
            worst_lin = worst_lin.max((twice / (2.0 * base) - 1.0).abs());
        }
        if worst_lin > 1e-9 {
            return Err(format!("CRB noise linearity off by {worst_lin:e}"));
        }

        let mut worst_mrt = 0.0f64;
        for _ in 0..20 {
            let p_dbm = rng.random_range(0.0..40.0);
            let config = SystemConfig {
                n_users: 1,
                user_distances_m: vec![30.0],
                user_angles_deg: vec![],
                p_max_dbm: p_dbm,
                ..SystemConfig::default()
            };
            let ch = sample_channels(&config, &mut rng);
            let h = &ch.h[0];
            let p = dbm_to_watts(p_dbm);
            let w = CMatrix::from_column_slice(4, 1, (h * C64::from(p.sqrt() / h.norm())).as_slice());
            let rate = sum_rate(&ch, &BeamformerAction::new(w), config.noise_power);
            let closed = (1.0 + p * h.norm_squared() / config.noise_power).log2();
            worst_mrt = worst_mrt.max((rate - closed).abs());
        }
        if worst_mrt > 1e-9 {
            return Err(format!("matched-filter rate off by {worst_mrt:e}"));
        }
        Ok(format!("rate cases exact, 1000 projections feasible, CRB noise linearity {worst_lin:.1e}, MRT {worst_mrt:.1e}"))
    })
}

fn tiny_trainer() -> TrainerConfig {
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

fn random_batch(shape: ActorShape, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let obs = |rng: &mut ChaCha8Rng| Matrix::from_fn(n, shape.obs_dim(), |_, _| rng.random_range(-2.0..2.0));
    Batch {
        obs: obs(rng),
        actions: Matrix::from_fn(n, shape.action_dim, |_, _| rng.random_range(-0.99..0.99)),
        rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        next_obs: obs(rng),
        terminal: vec![0.0; n],
    }
}

/// Central-difference step for gradient checks.
const FD_STEP: f64 = 1e-6;
/// Absolute slack for parameters whose true gradient is zero (for example
/// attention key biases, to which softmax is invariant).
const FD_FLOOR: f64 = 1e-8;

struct GradStats {
    probes: usize,
    worst: f64,
}

fn compare(analytic: f64, numeric: f64, tolerance: f64, what: &str, stats: &mut GradStats) -> Result<(), String> {
    let scale = analytic.abs().max(numeric.abs());
    let err = (analytic - numeric).abs();
    stats.probes += 1;
    if scale > FD_FLOOR {
        stats.worst = stats.worst.max(err / scale);
    }
    if err > tolerance * scale + FD_FLOOR {
        return Err(format!("{what}: analytic {analytic:e} vs numeric {numeric:e}"));
    }
    Ok(())
}

/// Analytic actor and critic loss gradients of a tiny network against
/// central differences, on every 5th scalar of every parameter tensor.
pub fn gradient_check(tolerance: f64, seed: u64) -> CheckResult {
    timed("gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6AD);
        let cfg = tiny_trainer();
        let mut stats = GradStats { probes: 0, worst: 0.0 };
        let base_shape = ActorShape { frame_dim: 6, history: 3, action_dim: 4 };

        let critics = CriticPair::new(base_shape.obs_dim(), base_shape.action_dim, 8, &mut rng);
        let batch = random_batch(base_shape, 5, &mut rng);
        let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grads) = critic_loss_and_grads(&critics, &batch, &targets);
        for (t, g) in grads.iter().enumerate() {
            for e in (0..g.len()).step_by(5) {
                let at = |d: f64| {
                    let mut c = critics.clone();
                    c.params.tensors[t].data[e] += d;
                    critic_loss_and_grads(&c, &batch, &targets).0
                };
                let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
                compare(g.data[e], numeric, tolerance, &format!("critic {}[{e}]", critics.params.names[t]), &mut stats)?;
            }
        }

        for (kind, shape) in [(ActorKind::TransformerMoe, base_shape), (ActorKind::Mlp, ActorShape { history: 1, ..base_shape })] {
            let actor = ActorNet::new(kind, shape, &cfg, &mut rng);
            let critics = CriticPair::new(shape.obs_dim(), shape.action_dim, 8, &mut rng);
            let batch = random_batch(shape, 4, &mut rng);
            let noise = gaussian_noise(4, shape.action_dim, &mut rng);
            let base = actor_loss_and_grads(&actor, &critics, &batch.obs, 0.3, &noise);
            for t in 0..base.grads.len() {
                for e in (0..base.grads[t].len()).step_by(5) {
                    let at = |d: f64| {
                        let mut a = actor.clone();
                        a.params_mut().tensors[t].data[e] += d;
                        actor_loss_and_grads(&a, &critics, &batch.obs, 0.3, &noise).loss
                    };
                    let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
                    let what = format!("{kind:?} actor {}[{e}]", actor.params().names[t]);
                    compare(base.grads[t].data[e], numeric, tolerance, &what, &mut stats)?;
                }
            }
        }
        Ok(format!("{} probes, worst rel error {:.2e} (tol {tolerance:e})", stats.probes, stats.worst))
    })
}

/// Gate weights of the mixture-of-experts actor sum to one.
pub fn gate_check(inputs: usize, tolerance: f64, seed: u64) -> CheckResult {
    timed("gates", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A7);
        let shape = ActorShape { frame_dim: 6, history: 3, action_dim: 4 };
        let actor = ActorNet::new(ActorKind::TransformerMoe, shape, &TrainerConfig { n_experts: 5, ..tiny_trainer() }, &mut rng);
        let obs = Matrix::from_fn(inputs, shape.obs_dim(), |_, _| rng.random_range(-10.0..10.0));
        let (g, out) = actor.evaluate(&obs);
        let gates = g.value(out.gates.ok_or("actor has no gates")?);
        let mut worst = 0.0f64;
        for r in 0..gates.rows {
            let row = gates.row(r);
            if row.iter().any(|p| p.is_nan() || *p < 0.0) {
                return Err(format!("input {r}: negative or NaN gate"));
            }
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        if worst > tolerance {
            return Err(format!("gate sums off by {worst:e}"));
        }
        Ok(format!("{inputs} inputs, worst |Σg − 1| {worst:.1e}, mean gate entropy {:.3}", gate_entropy(gates)))
    })
}

const FUZZ_TOKENS: &[&str] = &[
    "rate", "crb", "log10_crb", "power_ratio", "step_frac", "log10", "ln", "exp", "abs", "tanh", "min", "max", "clip", "(", ")",
    ",", "+", "-", "*", "/", "^", " ", "0", "1", "10", "0.5", "1e-3", "1e999", "2.", ".5", "e", "foo", "--", "((", "\u{3b1}",
];

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..48);
    if rng.random_bool(0.5) {
        let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        (0..len).map(|_| FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())]).collect()
    }
}

fn random_features(rng: &mut ChaCha8Rng) -> FeatureMap {
    let mut m = FeatureMap::default();
    for f in Feature::ALL {
        m.set(f, rng.random_range(-1e3..1e3));
    }
    m.crb = m.crb.abs() + 1e-9;
    m
}

const UNARY: [UnaryOp; 6] = [UnaryOp::Neg, UnaryOp::Log10, UnaryOp::Ln, UnaryOp::Exp, UnaryOp::Abs, UnaryOp::Tanh];
const BINARY: [BinaryOp; 7] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow, BinaryOp::Min, BinaryOp::Max];

/// Random syntax tree of at most `depth` levels.
pub fn random_node(rng: &mut ChaCha8Rng, depth: usize) -> Node {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return match rng.random_range(0..3) {
            0 => Node::Constant(rng.random_range(0.0..1e6)),
            1 => Node::Constant(rng.random_range(0..1000) as f64 / 8.0),
            _ => Node::Feature(Feature::ALL[rng.random_range(0..Feature::ALL.len())]),
        };
    }
    match rng.random_range(0..3) {
        0 => Node::unary(UNARY[rng.random_range(0..UNARY.len())], random_node(rng, depth - 1)),
        1 => {
            let op = BINARY[rng.random_range(0..BINARY.len())];
            Node::binary(op, random_node(rng, depth - 1), random_node(rng, depth - 1))
        }
        _ => {
            let lo = rng.random_range(-50.0..50.0);
            Node::Clip { arg: Box::new(random_node(rng, depth - 1)), lo, hi: lo + rng.random_range(0.0..50.0) }
        }
    }
}

/// Parser robustness on arbitrary input, canonical round-trip on random
/// trees, and bit-exact repeated evaluation.
pub fn parser_fuzz(byte_strings: usize, trees: usize, seed: u64) -> CheckResult {
    timed("parser_fuzz", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF22);
        let mut accepted = 0;
        for i in 0..byte_strings {
            let input = fuzz_input(&mut rng);
            let features = random_features(&mut rng);
            let outcome = catch_unwind(AssertUnwindSafe(|| {
                parse(&input).ok().map(|e| (e.to_canonical(), evaluate(&e, &features).map(f64::to_bits)))
            }));
            match outcome {
                Err(_) => return Err(format!("input {i} {input:?} crashed the parser")),
                Ok(Some(_)) => accepted += 1,
                Ok(None) => {}
            }
        }

        let mut built = 0;
        while built < trees {
            let Ok(expr) = RewardExpr::new(random_node(&mut rng, 6)) else { continue };
            built += 1;
            let text = expr.to_canonical();
            let back = parse(&text).map_err(|e| format!("canonical text {text:?} does not parse: {e}"))?;
            if back != expr || back.to_canonical() != text {
                return Err(format!("round-trip changed {text:?}"));
            }
            let features = random_features(&mut rng);
            let a = evaluate(&expr, &features).map(f64::to_bits);
            let b = evaluate(&back, &features).map(f64::to_bits);
            if a != b {
                return Err(format!("evaluation of {text:?} is not reproducible"));
            }
        }
        Ok(format!("{byte_strings} fuzz inputs ({accepted} accepted), {trees} trees round-tripped"))
    })
}

/// Identical seeds give bit-identical environment trajectories, training
/// metrics and evaluations.
pub fn determinism_probe(seed: u64) -> CheckResult {
    timed("determinism", || {
        let reward = parse("rate / 10 - log10(crb) / 10").expect("valid reward");
        let system = SystemConfig { user_angles_deg: vec![], ..SystemConfig::default() };
        let trajectory = || -> Result<Vec<u64>, String> {
            let mut env = IsacEnv::new(system.clone()).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut bits: Vec<u64> = env.reset(seed).features.iter().map(|v| v.to_bits()).collect();
            for _ in 0..system.episode_len {
                let action: Vec<f64> = (0..system.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let out = env.step(&action, &reward).map_err(|e| e.to_string())?;
                bits.extend(out.observation.features.iter().map(|v| v.to_bits()));
                bits.push(out.reward.to_bits());
            }
            Ok(bits)
        };
        if trajectory()? != trajectory()? {
            return Err("environment trajectories differ".to_string());
        }

        let small = SystemConfig { n_antennas: 2, n_users: 1, user_distances_m: vec![20.0], user_angles_deg: vec![10.0], episode_len: 10, history_len: 2, ..SystemConfig::default() };
        let cfg = TrainerConfig { batch_size: 16, warmup_steps: 40, total_env_steps: 120, eval_period: 40, eval_episodes: 1, seed, ..tiny_trainer() };
        let run = || train(&small, &reward, &cfg, ActorKind::TransformerMoe).map(|o| metrics_csv(&o.metrics)).map_err(|e| e.to_string());
        if run()? != run()? {
            return Err("training metrics differ".to_string());
        }

        let policy = RandomPolicy::new(&system);
        let a = evaluate_policy(&policy, &system, &reward, 3, seed).map_err(|e| e.to_string())?;
        let b = evaluate_policy(&policy, &system, &reward, 3, seed).map_err(|e| e.to_string())?;
        if a != b {
            return Err("evaluations differ".to_string());
        }
        Ok("trajectory, training metrics and evaluation reproduce bit-exactly".to_string())
    })
}
