use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac_agent::Registry;
use isac_harness::{
    build_report, load_spec, report, reward_audit, run_experiment, run_selftest, transport_for, HarnessError, Overrides,
    RunContext, RunRecord, SelftestOptions,
};
use isac_reward_llm::SystemClock;

#[derive(Parser)]
#[command(name = "isac-lab", version, about = "Train, compare and audit ISAC beamforming agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one agent over the spec's power sweep and seeds.
    Train {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory, replacing experiment.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of experiment.seeds.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Forbid network access.
        #[arg(long)]
        offline: bool,
        /// Keep cells that already finished in an earlier run.
        #[arg(long)]
        resume: bool,
    },
    /// Compare run records (files or run directories) over the sweep.
    SweepReport {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Directory for curves.csv, comparisons.csv and summary.json.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Show how the spec's reward is obtained and validate it.
    RewardAudit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        offline: bool,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    let registry = Registry::builtin();
    match cli.command {
        Command::Train { spec, out, seed_override, offline, resume } => {
            let spec = load_spec(&spec, &Overrides { out, seed: seed_override }, &registry)?;
            let transport = transport_for(&spec, offline)?;
            let clock = SystemClock::new();
            let ctx = RunContext { registry: &registry, transport: transport.as_ref(), clock: &clock, offline, resume };
            let record = run_experiment(&spec, &ctx)?;
            println!("{}", spec.run_dir().display());
            println!("{} cells, {} failed", record.rows.len(), record.failed_cells());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepReport { records, out } => {
            let records = records.iter().map(|p| RunRecord::load(p)).collect::<Result<Vec<_>, _>>()?;
            let summary = build_report(&records)?;
            report::write_report(&summary, &out)?;
            print!("{}", report::render_table(&summary));
            Ok(ExitCode::SUCCESS)
        }
        Command::RewardAudit { spec, offline } => {
            let spec = load_spec(&spec, &Overrides::default(), &registry)?;
            let transport = transport_for(&spec, offline)?;
            let audit = reward_audit(&spec, transport.as_ref(), &SystemClock::new(), offline)?;
            print!("{audit}");
            Ok(if audit.valid() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Selftest { seed } => {
            let report = run_selftest(&SelftestOptions { seed, ..SelftestOptions::default() });
            println!("{report}");
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
