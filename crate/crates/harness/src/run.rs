//! `train`: one experiment spec, every sweep power × seed.
//!
//! Layout of a run directory (`output_dir/<hash16>/`):
//!
//! | file | content |
//! |---|---|
//! | `spec.toml` | the spec bytes |
//! | `reward.txt` | canonical reward expression |
//! | `reward_source.txt` | reward file bytes (file mode) |
//! | `prompt.txt`, `transcript.txt`, `response.json` | prompt, assistant text and raw response body (LLM mode) |
//! | `cells/p<dbm>_s<seed>/cell.json` | the cell's row |
//! | `cells/.../metrics.csv` | in-training evaluations (`env_step,mean_return,mean_rate,mean_crb`) |
//! | `cells/.../losses.csv` | mean losses per evaluation period |
//! | `cells/.../eval.csv` | final evaluation episodes (`episode,seed,total_return,mean_rate,mean_crb`) |
//! | `cells/.../checkpoint.json` | kept actor (learned agents) |
//! | `final.csv` | all cell rows |
//! | `run_record.json` | the [`RunRecord`] |

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use isac_agent::{metrics_csv, AgentRun, Checkpoint, LossRecord, Registry, RunRequest, TrainerConfig};
use isac_reward_llm::{Clock, Transport};

use crate::record::{CellRow, CellStatus, RecordEnvironment, RunRecord, RUN_RECORD_FILE, RUN_RECORD_FORMAT};
use crate::reward::{resolve_reward, ResolvedReward};
use crate::spec::ExperimentSpec;
use crate::HarnessError;

/// Offset between a cell's seed and the seeds of its final evaluation,
/// disjoint from the in-training evaluation seeds.
pub const FINAL_EVAL_SEED_OFFSET: u64 = 1 << 41;

pub struct RunContext<'a> {
    pub registry: &'a Registry,
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    pub offline: bool,
    /// Reuse cells whose `cell.json` already reports success.
    pub resume: bool,
}

pub fn cell_dir(run_dir: &Path, p_max_dbm: f64, seed: u64) -> PathBuf {
    run_dir.join("cells").join(format!("p{p_max_dbm}_s{seed}"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn losses_csv(losses: &[LossRecord]) -> String {
    let mut s = String::from("env_step,updates,critic_loss,actor_loss,alpha_loss,entropy,gate_entropy,alpha\n");
    for l in losses {
        let m = &l.mean;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            l.env_step, l.updates, m.critic_loss, m.actor_loss, m.alpha_loss, m.entropy, m.gate_entropy, m.alpha
        );
    }
    s
}

fn persist_reward(dir: &Path, reward: &ResolvedReward) -> Result<Vec<String>, HarnessError> {
    write(&dir.join("reward.txt"), format!("{}\n", reward.canonical))?;
    if let Some(text) = &reward.file_text {
        write(&dir.join("reward_source.txt"), text)?;
    }
    if let Some(p) = &reward.prompt {
        write(&dir.join("prompt.txt"), &p.full_prompt)?;
    }
    let mut transcripts = Vec::new();
    if let Some(resp) = &reward.response {
        write(&dir.join("transcript.txt"), &resp.raw_text)?;
        write(&dir.join("response.json"), &resp.raw_body)?;
        transcripts = vec!["transcript.txt".to_string(), "response.json".to_string()];
    }
    if let Some(notice) = &reward.fallback_notice {
        write(&dir.join("reward_notice.txt"), format!("{notice}\n"))?;
    }
    Ok(transcripts)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_string())
}

fn write_cell(dir: &Path, run: &AgentRun, reward: &ResolvedReward, trainer: &TrainerConfig) -> Result<(), HarnessError> {
    let mut eval = String::from("episode,seed,total_return,mean_rate,mean_crb\n");
    for e in &run.final_eval.episodes {
        let _ = writeln!(eval, "{},{},{},{},{}", e.episode, e.seed, e.total_return, e.mean_rate, e.mean_crb);
    }
    write(&dir.join("eval.csv"), eval)?;
    if let Some(t) = &run.training {
        write(&dir.join("metrics.csv"), metrics_csv(&t.metrics))?;
        write(&dir.join("losses.csv"), losses_csv(&t.losses))?;
        let ck = Checkpoint::new(&t.best, t.best_row.map(|r| r.env_step), &reward.canonical, &run.system, trainer);
        ck.save(&dir.join("checkpoint.json")).map_err(|e| HarnessError::Record(e.to_string()))?;
    }
    Ok(())
}

fn run_cell(spec: &ExperimentSpec, reward: &ResolvedReward, ctx: &RunContext<'_>, p: f64, seed: u64, dir: &Path) -> CellRow {
    let system = spec.system_at(p);
    let trainer = TrainerConfig { seed, ..spec.trainer.clone() };
    let strategy = match ctx.registry.get(&spec.agent_kind) {
        Ok(s) => s,
        Err(e) => return CellRow::failed(p, seed, e.to_string()),
    };
    let request = RunRequest {
        system: &system,
        trainer: &trainer,
        reward: &reward.expr,
        eval_episodes: spec.eval_episodes,
        eval_seed: seed.wrapping_add(FINAL_EVAL_SEED_OFFSET),
    };
    let run = match catch_unwind(AssertUnwindSafe(|| strategy.run(&request))) {
        Ok(Ok(run)) => run,
        Ok(Err(e)) => return CellRow::failed(p, seed, e.to_string()),
        Err(payload) => return CellRow::failed(p, seed, format!("panic: {}", panic_message(payload))),
    };
    if let Err(e) = write_cell(dir, &run, reward, &trainer) {
        return CellRow::failed(p, seed, e.to_string());
    }
    let r = &run.final_eval;
    CellRow {
        p_max_dbm: p,
        seed,
        status: CellStatus::Ok,
        error: None,
        mean_rate: Some(r.mean_rate),
        mean_crb: Some(r.mean_crb),
        mean_return: Some(r.mean_return),
        best_env_step: run.training.as_ref().and_then(|t| t.best_row.map(|b| b.env_step)),
        updates: run.training.as_ref().map_or(0, |t| t.updates),
    }
}

fn resumed(path: &Path) -> Option<CellRow> {
    let row: CellRow = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    row.is_ok().then_some(row)
}

/// Runs every cell of the spec and writes its artifacts. Cell failures are
/// recorded and the sweep continues; errors before the first cell (output
/// directory, reward resolution) abort.
pub fn run_experiment(spec: &ExperimentSpec, ctx: &RunContext<'_>) -> Result<RunRecord, HarnessError> {
    let dir = spec.run_dir();
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    write(&dir.join("spec.toml"), &spec.source_text)?;

    let reward = resolve_reward(spec, ctx.transport, ctx.clock, ctx.offline)?;
    let transcripts = persist_reward(&dir, &reward)?;
    log::info!("{}: reward {}", spec.label, reward.canonical);

    let mut rows = Vec::with_capacity(spec.sweep_dbm.len() * spec.seeds.len());
    for &p in &spec.sweep_dbm {
        for &seed in &spec.seeds {
            let cdir = cell_dir(&dir, p, seed);
            let cell_file = cdir.join("cell.json");
            if ctx.resume {
                if let Some(row) = resumed(&cell_file) {
                    log::info!("{}: p={p} dBm seed={seed} reused", spec.label);
                    rows.push(row);
                    continue;
                }
            }
            fs::create_dir_all(&cdir).map_err(|e| HarnessError::io(&cdir, e))?;
            let row = run_cell(spec, &reward, ctx, p, seed, &cdir);
            match &row.error {
                None => log::info!(
                    "{}: p={p} dBm seed={seed} rate={:.4} crb={:.4e} return={:.4}",
                    spec.label,
                    row.mean_rate.unwrap_or(f64::NAN),
                    row.mean_crb.unwrap_or(f64::NAN),
                    row.mean_return.unwrap_or(f64::NAN)
                ),
                Some(e) => log::warn!("{}: p={p} dBm seed={seed} failed: {e}", spec.label),
            }
            write(&cell_file, serde_json::to_string_pretty(&row).expect("row serializes") + "\n")?;
            rows.push(row);
        }
    }

    let record = RunRecord {
        format: RUN_RECORD_FORMAT.to_string(),
        spec_hash: spec.spec_hash.clone(),
        label: spec.label.clone(),
        agent_kind: spec.agent_kind.clone(),
        reward_mode: reward.mode.to_string(),
        reward_canonical: reward.canonical.clone(),
        reward_notice: reward.fallback_notice.clone(),
        sweep_dbm: spec.sweep_dbm.clone(),
        seeds: spec.seeds.clone(),
        environment: RecordEnvironment::current(),
        transcripts,
        rows,
    };
    write(&dir.join("final.csv"), record.final_csv())?;
    record.save(&dir.join(RUN_RECORD_FILE))?;
    Ok(record)
}
