//! `gsobs`: run declarative experiments and write deterministic reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsobs::experiment::{self, ExperimentConfig, ExperimentKind, ExperimentOutput};
use gsobs::Error;

#[derive(Parser)]
#[command(name = "gsobs", version, about = "Experiment runner for the gsobs toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory for report.json and summary.csv.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the available experiment kinds.
    ListExperiments,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Premise { .. } => EXIT_FAILURE,
        Error::QuadratureNotConverged { .. } | Error::Numerical { .. } => EXIT_NUMERICAL,
        Error::Domain { .. } | Error::DimensionMismatch { .. } | Error::UnsupportedDimension(_) => EXIT_CONFIG,
    }
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let doc = experiment::report_document(cfg, out);
    let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join("summary.csv"))?;
    w.write_record(&out.table.columns)?;
    for row in &out.table.rows {
        w.write_record(row)?;
    }
    w.flush()
}

fn run(config: &Path, out_dir: &Path, threads: Option<usize>, seed: Option<u64>) -> ExitCode {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(exit_code(&e).max(EXIT_CONFIG));
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("config error: --threads must be ≥ 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let out = match experiment::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            match &e {
                Error::Premise { step, .. } => eprintln!("failed step `{step}`: {e}"),
                _ => eprintln!("error: {e}"),
            }
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Err(e) = write_outputs(out_dir, &cfg, &out) {
        eprintln!("error: cannot write reports to {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_FAILURE);
    }
    if out.passed {
        println!("{}: passed ({} rows) -> {}", out.kind.name(), out.table.rows.len(), out_dir.display());
        ExitCode::SUCCESS
    } else {
        let step = out.failed_step.as_deref().unwrap_or("unknown");
        eprintln!("{}: failed step `{step}` -> {}", out.kind.name(), out_dir.display());
        ExitCode::from(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => run(&config, &out, threads, seed),
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<20} {}", k.name(), k.description());
            }
            ExitCode::SUCCESS
        }
    }
}
