use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use foro::cli::{self, ExperimentConfig, EXIT_CONFIG, EXIT_RUNTIME};
use foro::protocol::Mode;
use foro::ForoError;

#[derive(Parser)]
#[command(name = "foro", version, about = "Forward-only continual learning")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long)]
        fast: bool,
        /// Ridge regularizer used by the equivalence checks.
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
    },
    /// Summarize a checkpoint file.
    Inspect { checkpoint: PathBuf },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode `{s}` (expected foro, kem-only or fitness-only)"))
}

fn threads() -> Result<Option<usize>, ForoError> {
    match std::env::var("FORO_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                ForoError::InvalidConfig(format!("FORO_THREADS={v} is not a positive integer"))
            }),
        Err(_) => Ok(None),
    }
}

fn config_error(e: &ForoError) -> bool {
    matches!(
        e,
        ForoError::InvalidConfig(_)
            | ForoError::Json(_)
            | ForoError::NonpositiveGamma(_)
            | ForoError::InvalidSpec(_)
            | ForoError::MissingFile(_)
    )
}

fn fail(e: ForoError, config_stage: bool) -> ExitCode {
    eprintln!("error [{}]: {e}", cli::module_of(&e));
    if config_stage && config_error(&e) {
        ExitCode::from(EXIT_CONFIG as u8)
    } else {
        ExitCode::from(EXIT_RUNTIME as u8)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Run {
            config,
            seed,
            mode,
            out,
        } => {
            let prepared = (|| {
                let mut cfg = ExperimentConfig::load(&config)?;
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(m) = mode {
                    cfg.mode = m;
                }
                if let Some(o) = out {
                    cfg.output_dir = o;
                }
                cfg.validate()?;
                Ok::<_, ForoError>((cfg, threads()?))
            })();
            let (cfg, threads) = match prepared {
                Ok(v) => v,
                Err(e) => return fail(e, true),
            };
            match cli::run_experiment(&cfg, threads).and_then(|a| {
                a.write(&cfg.output_dir)?;
                Ok(a)
            }) {
                Ok(a) => {
                    println!(
                        "tasks={} average_accuracy={} average_forgetting={} out={}",
                        a.summary.tasks,
                        a.summary.average_accuracy,
                        a.summary.average_forgetting,
                        cfg.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e, false),
            }
        }
        Command::Verify { fast, gamma } => match cli::verify(fast, gamma) {
            Ok(report) => {
                print!("{report}");
                if report.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_RUNTIME as u8)
                }
            }
            Err(e) => fail(e, true),
        },
        Command::Inspect { checkpoint } => match cli::inspect(&checkpoint) {
            Ok(r) => {
                print!("{r}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, false),
        },
    }
}
