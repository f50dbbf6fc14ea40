//! `sweep-report`: per-method curves over the power sweep and pairwise
//! improvements.
//!
//! `curves.csv` columns: `method,p_max_dbm,n_ok,n_failed,rate_mean,rate_std,
//! crb_mean,crb_std,log10_crb_mean,return_mean,return_std`. Means and
//! sample standard deviations (n − 1; 0 for a single seed) are over the
//! successful seeds of a cell; `log10_crb_mean` is `log10(crb_mean)`.
//!
//! `comparisons.csv` (two or more methods) columns: `method_a,method_b,
//! p_max_dbm,rate_a,rate_b,rate_improvement_pct,crb_a,crb_b,
//! crb_improvement_pct` for every ordered pair, with
//! `rate_improvement_pct = (rate_a − rate_b) / rate_b · 100` and
//! `crb_improvement_pct = (crb_b − crb_a) / crb_b · 100`.
//!
//! `summary.json` holds the same data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::record::RunRecord;
use crate::HarnessError;

pub fn rate_improvement_pct(rate_a: f64, rate_b: f64) -> f64 {
    (rate_a - rate_b) / rate_b * 100.0
}

pub fn crb_improvement_pct(crb_a: f64, crb_b: f64) -> f64 {
    (crb_b - crb_a) / crb_b * 100.0
}

/// Sample mean and standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub p_max_dbm: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rate_mean: Option<f64>,
    pub rate_std: Option<f64>,
    pub crb_mean: Option<f64>,
    pub crb_std: Option<f64>,
    pub log10_crb_mean: Option<f64>,
    pub return_mean: Option<f64>,
    pub return_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub p_max_dbm: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_improvement_pct: f64,
    pub crb_a: f64,
    pub crb_b: f64,
    pub crb_improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub methods: Vec<String>,
    pub sweep_dbm: Vec<f64>,
    /// Method-major, then power.
    pub curves: Vec<CurvePoint>,
    pub comparisons: Vec<Comparison>,
}

impl SweepReport {
    pub fn point(&self, method: &str, p_max_dbm: f64) -> Option<&CurvePoint> {
        self.curves.iter().find(|c| c.method == method && c.p_max_dbm == p_max_dbm)
    }

    pub fn comparison(&self, a: &str, b: &str, p_max_dbm: f64) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.method_a == a && c.method_b == b && c.p_max_dbm == p_max_dbm)
    }
}

pub fn build_report(records: &[RunRecord]) -> Result<SweepReport, HarnessError> {
    let first = records.first().ok_or_else(|| HarnessError::Report("no run records given".to_string()))?;
    for r in records {
        if r.sweep_dbm != first.sweep_dbm {
            return Err(HarnessError::Report(format!(
                "sweep of `{}` {:?} differs from `{}` {:?}",
                r.label, r.sweep_dbm, first.label, first.sweep_dbm
            )));
        }
    }
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if methods.contains(&r.label) {
            return Err(HarnessError::Report(format!("method `{}` appears in more than one record", r.label)));
        }
        methods.push(r.label.clone());
    }

    let mut curves = Vec::new();
    for r in records {
        for &p in &r.sweep_dbm {
            let cells: Vec<_> = r.rows.iter().filter(|row| row.p_max_dbm == p).collect();
            let ok: Vec<_> = cells.iter().filter(|row| row.is_ok()).collect();
            let pick = |f: fn(&crate::record::CellRow) -> Option<f64>| ok.iter().filter_map(|row| f(row)).collect::<Vec<_>>();
            let rate = mean_std(&pick(|c| c.mean_rate));
            let crb = mean_std(&pick(|c| c.mean_crb));
            let ret = mean_std(&pick(|c| c.mean_return));
            curves.push(CurvePoint {
                method: r.label.clone(),
                p_max_dbm: p,
                n_ok: ok.len(),
                n_failed: cells.len() - ok.len(),
                rate_mean: rate.map(|v| v.0),
                rate_std: rate.map(|v| v.1),
                crb_mean: crb.map(|v| v.0),
                crb_std: crb.map(|v| v.1),
                log10_crb_mean: crb.map(|v| v.0.log10()),
                return_mean: ret.map(|v| v.0),
                return_std: ret.map(|v| v.1),
            });
        }
    }

    let mut comparisons = Vec::new();
    for a in &methods {
        for b in methods.iter().filter(|b| *b != a) {
            for &p in &first.sweep_dbm {
                let pa = curves.iter().find(|c| &c.method == a && c.p_max_dbm == p).expect("curve exists");
                let pb = curves.iter().find(|c| &c.method == b && c.p_max_dbm == p).expect("curve exists");
                if let (Some(ra), Some(rb), Some(ca), Some(cb)) = (pa.rate_mean, pb.rate_mean, pa.crb_mean, pb.crb_mean) {
                    comparisons.push(Comparison {
                        method_a: a.clone(),
                        method_b: b.clone(),
                        p_max_dbm: p,
                        rate_a: ra,
                        rate_b: rb,
                        rate_improvement_pct: rate_improvement_pct(ra, rb),
                        crb_a: ca,
                        crb_b: cb,
                        crb_improvement_pct: crb_improvement_pct(ca, cb),
                    });
                }
            }
        }
    }
    Ok(SweepReport { methods, sweep_dbm: first.sweep_dbm.clone(), curves, comparisons })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn curves_csv(report: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method", "p_max_dbm", "n_ok", "n_failed", "rate_mean", "rate_std", "crb_mean", "crb_std", "log10_crb_mean",
        "return_mean", "return_std",
    ])
    .expect("in-memory write");
    for c in &report.curves {
        w.write_record([
            c.method.clone(),
            c.p_max_dbm.to_string(),
            c.n_ok.to_string(),
            c.n_failed.to_string(),
            opt(c.rate_mean),
            opt(c.rate_std),
            opt(c.crb_mean),
            opt(c.crb_std),
            opt(c.log10_crb_mean),
            opt(c.return_mean),
            opt(c.return_std),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn comparisons_csv(report: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method_a", "method_b", "p_max_dbm", "rate_a", "rate_b", "rate_improvement_pct", "crb_a", "crb_b", "crb_improvement_pct",
    ])
    .expect("in-memory write");
    for c in &report.comparisons {
        w.write_record([
            c.method_a.clone(),
            c.method_b.clone(),
            c.p_max_dbm.to_string(),
            c.rate_a.to_string(),
            c.rate_b.to_string(),
            c.rate_improvement_pct.to_string(),
            c.crb_a.to_string(),
            c.crb_b.to_string(),
            c.crb_improvement_pct.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Writes `curves.csv`, `summary.json` and, for two or more methods,
/// `comparisons.csv` into `dir`.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let put = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    };
    put("curves.csv", curves_csv(report))?;
    if report.methods.len() > 1 {
        put("comparisons.csv", comparisons_csv(report))?;
    }
    put("summary.json", serde_json::to_string_pretty(report).expect("report serializes") + "\n")
}

/// Human-readable table: one row per power, mean ± std per method, and
/// the improvement of the first method over each other one.
pub fn render_table(report: &SweepReport) -> String {
    let fmt_ms = |m: Option<f64>, s: Option<f64>, sci: bool| match (m, s) {
        (Some(m), Some(s)) if sci => format!("{m:.3e} ± {s:.1e}"),
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        _ => "failed".to_string(),
    };
    let mut out = String::new();
    for (title, sci, metric) in [("mean rate (bits/s/Hz)", false, 0), ("mean CRB (rad²)", true, 1)] {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:>8}", "p [dBm]");
        for m in &report.methods {
            let _ = write!(out, "  {m:>24}");
        }
        let lead = &report.methods[0];
        let others = &report.methods[1..];
        for b in others {
            let _ = write!(out, "  {:>20}", format!("{lead} vs {b}"));
        }
        out.push('\n');
        for &p in &report.sweep_dbm {
            let _ = write!(out, "{p:>8}");
            for m in &report.methods {
                let c = report.point(m, p).expect("curve exists");
                let cell = if metric == 0 { fmt_ms(c.rate_mean, c.rate_std, sci) } else { fmt_ms(c.crb_mean, c.crb_std, sci) };
                let _ = write!(out, "  {cell:>24}");
            }
            for b in others {
                let cell = report.comparison(lead, b, p).map_or("n/a".to_string(), |c| {
                    let v = if metric == 0 { c.rate_improvement_pct } else { c.crb_improvement_pct };
                    format!("{v:+.2}%")
                });
                let _ = write!(out, "  {cell:>20}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
