use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use thermem_cli::config::{Mode, RunConfig};
use thermem_cli::runner;

/// Forward simulation and kernel identification for a 1-D heat equation
/// with thermal memory and hysteretic thermostat feedback.
#[derive(Parser, Debug)]
#[command(name = "thermem", version)]
struct Args {
    /// JSON run configuration; may be omitted for verify/bench runs
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Mode override: forward | invert | roundtrip | verify | bench
    #[arg(long)]
    mode: Option<String>,

    /// Abort on compatibility violations instead of warning
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let mode_override = match args.mode.as_deref().map(Mode::parse) {
        Some(None) => {
            eprintln!("config error: unknown mode '{}'", args.mode.unwrap());
            return ExitCode::from(2);
        }
        Some(Some(m)) => Some(m),
        None => None,
    };

    let (mut cfg, base) = match &args.config {
        Some(path) => match RunConfig::from_path(path) {
            Ok(cfg) => {
                let base = path.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
                (cfg, base)
            }
            Err(e) => {
                eprintln!("config error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => {
            let Some(mode) = mode_override else {
                eprintln!("config error: give --config or --mode");
                return ExitCode::from(2);
            };
            if !matches!(mode, Mode::Verify | Mode::Bench) {
                eprintln!("config error: mode {mode:?} needs a --config file");
                return ExitCode::from(2);
            }
            (
                RunConfig {
                    mode,
                    grid: Default::default(),
                    problem: None,
                    roundtrip: Default::default(),
                    noise: Default::default(),
                    solver: Default::default(),
                    output_dir: None,
                },
                PathBuf::from("."),
            )
        }
    };

    if let Some(mode) = mode_override {
        cfg.mode = mode;
    }
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    if args.strict {
        cfg.solver.strict = true;
    }

    match runner::run(&cfg, &base) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
