use std::fmt::Write;

use isac_env::{IsacEnv, SystemConfig};
use isac_reward_dsl::RewardExpr;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::{ActorKind, ActorNet, ActorShape};
use crate::config::TrainerConfig;
use crate::critic::CriticPair;
use crate::error::AgentError;
use crate::evaluate::evaluate_policy;
use crate::memory::{ReplayMemory, Transition};
use crate::normalizer::ObsNormalizer;
use crate::policy::{actor_act, ActMode, LearnedPolicy};
use crate::sac::{Batch, LossReport, SacLearner};

/// Offset between the training seed and the seed of in-training
/// evaluations, so evaluation episodes never coincide with training ones.
pub const EVAL_SEED_OFFSET: u64 = 1 << 40;

pub const METRICS_HEADER: &str = "env_step,mean_return,mean_rate,mean_crb";

/// One evaluator call during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: usize,
    pub mean_return: f64,
    pub mean_rate: f64,
    pub mean_crb: f64,
}

/// Losses averaged over the updates of one evaluation period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub env_step: usize,
    pub updates: usize,
    pub mean: LossReport,
}

/// Renders rows as CSV with [`METRICS_HEADER`]; floats use the shortest
/// representation that round-trips.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.env_step, r.mean_return, r.mean_rate, r.mean_crb);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Actor of the evaluation with the highest mean return (the last
    /// actor if no evaluation ran).
    pub best: LearnedPolicy,
    pub best_row: Option<MetricsRow>,
    pub last: LearnedPolicy,
    pub metrics: Vec<MetricsRow>,
    pub losses: Vec<LossRecord>,
    pub updates: u64,
    pub parameter_count: usize,
    pub final_alpha: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    LossReport {
        critic_loss: avg(|r| r.critic_loss),
        actor_loss: avg(|r| r.actor_loss),
        alpha_loss: avg(|r| r.alpha_loss),
        entropy: avg(|r| r.entropy),
        gate_entropy: avg(|r| r.gate_entropy),
        alpha: avg(|r| r.alpha),
    }
}

/// Soft actor-critic training on one environment. Single-threaded and
/// bit-reproducible for a given seed.
pub fn train(system: &SystemConfig, reward: &RewardExpr, config: &TrainerConfig, kind: ActorKind) -> Result<TrainOutcome, AgentError> {
    config.validate()?;
    let mut env = IsacEnv::new(system.clone())?;
    let shape = ActorShape { frame_dim: system.frame_dim(), history: system.history_len, action_dim: system.action_dim() };
    let mut init_rng = stream(config.seed, 1);
    let mut act_rng = stream(config.seed, 2);
    let mut env_rng = stream(config.seed, 3);
    let mut learn_rng = stream(config.seed, 4);

    let actor = ActorNet::new(kind, shape, config, &mut init_rng);
    let critics = CriticPair::new(shape.obs_dim(), shape.action_dim, config.critic_hidden, &mut init_rng);
    let parameter_count = actor.parameter_count();
    let mut learner = SacLearner::new(actor, critics, config);
    let mut memory = ReplayMemory::new(config.capacity);
    let mut normalizer = ObsNormalizer::identity(shape.frame_dim);
    let mut fitted = false;
    let name = match kind {
        ActorKind::TransformerMoe => "agentic",
        ActorKind::Mlp => "mlp_sac",
    };
    let snapshot = |learner: &SacLearner, normalizer: &ObsNormalizer| LearnedPolicy {
        name: name.to_string(),
        actor: learner.actor.clone(),
        normalizer: normalizer.clone(),
    };

    let mut metrics = Vec::new();
    let mut losses = Vec::new();
    let mut window: Vec<LossReport> = Vec::new();
    let mut best: Option<(MetricsRow, LearnedPolicy)> = None;
    let mut obs = env.reset(env_rng.next_u64());
    for step in 0..config.total_env_steps {
        let action = if step < config.warmup_steps {
            (0..shape.action_dim).map(|_| act_rng.random_range(-1.0..=1.0)).collect()
        } else {
            actor_act(&learner.actor, &normalizer, &obs, ActMode::Stochastic, &mut act_rng)?
        };
        let out = env.step(&action, reward)?;
        let next_obs = if out.done { env.reset(env_rng.next_u64()) } else { out.observation.clone() };
        memory.push(Transition {
            obs: std::mem::replace(&mut obs, next_obs),
            action,
            reward: out.reward,
            next_obs: out.observation,
            done: out.done && !config.bootstrap_time_limit,
        });

        if step + 1 >= config.warmup_steps {
            if !fitted {
                normalizer = ObsNormalizer::fit(shape.frame_dim, memory.iter().map(|t| t.obs.as_slice()));
                fitted = true;
            }
            if memory.len() >= config.batch_size {
                for _ in 0..config.updates_per_step {
                    let batch = Batch::from_transitions(&memory.sample(config.batch_size, &mut learn_rng), &normalizer);
                    window.push(learner.update(&batch, &mut learn_rng)?);
                }
            }
        }

        if (step + 1) % config.eval_period == 0 {
            let policy = snapshot(&learner, &normalizer);
            let report = evaluate_policy(&policy, system, reward, config.eval_episodes, config.seed.wrapping_add(EVAL_SEED_OFFSET))?;
            let row = MetricsRow {
                env_step: step + 1,
                mean_return: report.mean_return,
                mean_rate: report.mean_rate,
                mean_crb: report.mean_crb,
            };
            metrics.push(row);
            if !window.is_empty() {
                losses.push(LossRecord { env_step: step + 1, updates: window.len(), mean: mean_report(&window) });
                window.clear();
            }
            if best.as_ref().is_none_or(|(b, _)| row.mean_return > b.mean_return) {
                best = Some((row, policy));
            }
        }
    }

    let last = snapshot(&learner, &normalizer);
    let (best_row, best) = match best {
        Some((row, policy)) => (Some(row), policy),
        None => (None, last.clone()),
    };
    Ok(TrainOutcome {
        best,
        best_row,
        last,
        metrics,
        losses,
        updates: learner.updates(),
        parameter_count,
        final_alpha: learner.alpha(),
    })
}
