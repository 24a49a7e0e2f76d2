use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sdlc_agents_core::harness::{self, Experiment, HarnessError, IngestKind};

#[derive(Parser)]
#[command(name = "sdlc-agents", version, about = "Run LLM agent teams under Waterfall, V-Model and Agile and analyse the runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every project x process x model cell of an experiment.
    Run {
        config: PathBuf,
        /// Seed for every cell, replacing the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Add static-analysis issues or a manual test session to a run record.
    Ingest {
        #[arg(value_enum)]
        kind: Kind,
        file: PathBuf,
        #[arg(long)]
        runs: PathBuf,
    },
    /// Write runs.csv, descriptives.md, anova.md and scatter.csv.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an experiment config without running anything.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Issues,
    Manual,
}

const OK: u8 = 0;
const CONFIG_ERROR: u8 = 1;
const PARTIAL_FAILURE: u8 = 2;

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(CONFIG_ERROR)
}

fn cmd_run(config: PathBuf, seed: Option<u64>) -> ExitCode {
    let exp = match Experiment::load(&config) {
        Ok(e) => e,
        Err(e) => return fail(&e),
    };
    let backends = match exp.backends() {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    let outcomes = harness::run_matrix(&exp, &backends, seed, |o| println!("{}", o.summary_line()));
    let completed = outcomes.iter().filter(|o| o.status.is_completed()).count();
    println!("{completed}/{} cells completed; runs in {}", outcomes.len(), exp.output_dir.display());
    ExitCode::from(if completed == outcomes.len() { OK } else { PARTIAL_FAILURE })
}

fn cmd_ingest(kind: Kind, file: PathBuf, runs: PathBuf) -> ExitCode {
    let kind = match kind {
        Kind::Issues => IngestKind::Issues,
        Kind::Manual => IngestKind::Manual,
    };
    match harness::ingest(kind, &file, &runs) {
        Ok(r) => {
            let q = r.quality;
            let show = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            println!(
                "{}: q1={} q2={} q3={} q4={}",
                r.run_id(),
                show(q.code_smells.map(|v| v.to_string())),
                show(q.vulnerabilities.map(|v| v.to_string())),
                show(q.ai_bug_rate.map(|v| v.to_string())),
                show(q.human_bug_rate.map(|v| v.to_string())),
            );
            ExitCode::from(OK)
        }
        Err(e) => fail(&e),
    }
}

fn cmd_report(runs: PathBuf, out: PathBuf) -> ExitCode {
    match harness::report(&runs, &out) {
        Ok(files) => {
            for p in [&files.runs_csv, &files.descriptives_md, &files.anova_md, &files.scatter_csv] {
                println!("wrote {}", p.display());
            }
            ExitCode::from(OK)
        }
        Err(e) => fail(&e),
    }
}

fn cmd_validate(config: PathBuf) -> ExitCode {
    match Experiment::load(&config) {
        Ok(exp) => {
            println!(
                "ok: {} projects x {} processes x {} models = {} cells",
                exp.projects.len(),
                exp.processes.len(),
                exp.config.models.len(),
                exp.cells(None).len()
            );
            ExitCode::from(OK)
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(OK);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    match cli.command {
        Command::Run { config, seed } => cmd_run(config, seed),
        Command::Ingest { kind, file, runs } => cmd_ingest(kind, file, runs),
        Command::Report { runs, out } => cmd_report(runs, out),
        Command::Validate { config } => cmd_validate(config),
    }
}
