use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const RUN_RECORD_FORMAT: &str = "isac-run-record/1";
pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const FINAL_CSV_HEADER: [&str; 8] = ["p_max_dbm", "seed", "status", "mean_rate", "mean_crb", "mean_return", "best_env_step", "error"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Final evaluation of one (power, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub p_max_dbm: f64,
    pub seed: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub mean_rate: Option<f64>,
    pub mean_crb: Option<f64>,
    pub mean_return: Option<f64>,
    /// Training step of the kept checkpoint, for learned agents.
    pub best_env_step: Option<usize>,
    pub updates: u64,
}

impl CellRow {
    pub fn failed(p_max_dbm: f64, seed: u64, error: String) -> Self {
        CellRow {
            p_max_dbm,
            seed,
            status: CellStatus::Failed,
            error: Some(error),
            mean_rate: None,
            mean_crb: None,
            mean_return: None,
            best_env_step: None,
            updates: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

/// Where and when a record was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEnvironment {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    /// Cells ran one after another on a single thread.
    pub reference_mode: bool,
}

impl RecordEnvironment {
    pub fn current() -> Self {
        RecordEnvironment {
            tool: "isac-lab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            reference_mode: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub spec_hash: String,
    pub label: String,
    pub agent_kind: String,
    pub reward_mode: String,
    pub reward_canonical: String,
    pub reward_notice: Option<String>,
    pub sweep_dbm: Vec<f64>,
    pub seeds: Vec<u64>,
    pub environment: RecordEnvironment,
    /// Transcript files in the run directory, relative to it.
    pub transcripts: Vec<String>,
    /// One row per sweep power and seed, power-major.
    pub rows: Vec<CellRow>,
}

impl RunRecord {
    /// Every sweep × seed cell is present exactly once, in order.
    pub fn check_complete(&self) -> Result<(), String> {
        let expected = self.sweep_dbm.len() * self.seeds.len();
        if self.rows.len() != expected {
            return Err(format!("{} rows for {expected} cells", self.rows.len()));
        }
        let cells = self.sweep_dbm.iter().flat_map(|p| self.seeds.iter().map(move |s| (*p, *s)));
        for (row, (p, s)) in self.rows.iter().zip(cells) {
            if row.p_max_dbm != p || row.seed != s {
                return Err(format!("row ({}, {}) where ({p}, {s}) was expected", row.p_max_dbm, row.seed));
            }
        }
        Ok(())
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }

    /// Reads a record from a file, or from `run_record.json` inside a
    /// directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = if path.is_dir() { path.join(RUN_RECORD_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| HarnessError::io(&file, e))?;
        let record: RunRecord = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Record(format!("{}: {e}", file.display())))?;
        if record.format != RUN_RECORD_FORMAT {
            return Err(HarnessError::Record(format!("{}: unsupported format `{}`", file.display(), record.format)));
        }
        record.check_complete().map_err(|e| HarnessError::Record(format!("{}: {e}", file.display())))?;
        Ok(record)
    }

    /// The per-cell table as CSV with [`FINAL_CSV_HEADER`].
    pub fn final_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(FINAL_CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.p_max_dbm.to_string(),
                r.seed.to_string(),
                if r.is_ok() { "ok" } else { "failed" }.to_string(),
                opt(r.mean_rate),
                opt(r.mean_crb),
                opt(r.mean_return),
                r.best_env_step.map_or(String::new(), |s| s.to_string()),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}
