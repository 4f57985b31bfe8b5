use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldd_core::cli::{self, parse_levels, CmdResult, LOG_ENV};
use ldd_core::dd_solver::GInitMode;
use ldd_core::verification::VerifyOptions;

/// L-scheme domain decomposition for two-phase flow in a two-layer medium.
///
/// Log verbosity is read from LDD_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "ldd", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write fields, convergence log and manifest.
    Run {
        config: PathBuf,
        /// Output directory (overrides `[output] directory`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the admissibility report, tau_max and the suggested L.
    Check { config: PathBuf },
    /// Refinement study of a manufactured case against the monolithic oracle.
    Verify {
        #[arg(long)]
        case: String,
        /// Comma-separated refinement levels, e.g. 8,16,32.
        #[arg(long, value_parser = parse_levels)]
        levels: std::vec::Vec<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "warm")]
        g_init: GInitMode,
        /// Negative control: perturb the wetting source by 0.1.
        #[arg(long)]
        break_source: bool,
    },
}

fn finish<T>(r: CmdResult<T>, ok: impl FnOnce(T)) -> ExitCode {
    match r {
        Ok(v) => {
            ok(v);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message.trim_end());
            ExitCode::from(f.code.code())
        }
    }
}

fn main() -> ExitCode {
    let mut logger = env_logger::Builder::new();
    let from_env = std::env::var(LOG_ENV).ok();
    match &from_env {
        Some(spec) => logger.parse_filters(spec),
        // the global max level gates instead, so a scenario's
        // `[output] verbosity` can raise it later
        None => logger.filter_level(log::LevelFilter::Trace),
    };
    logger.init();
    if from_env.is_none() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    match Args::parse().command {
        Command::Run { config, out } => finish(cli::cmd_run(&config, out.as_deref()), |s| {
            println!("wrote {} field files to {}", s.field_files, s.out_dir.display())
        }),
        Command::Check { config } => finish(cli::cmd_check(&config), |text| print!("{text}")),
        Command::Verify {
            case,
            levels,
            out,
            tol,
            lambda,
            g_init,
            break_source,
        } => {
            let opts = VerifyOptions {
                tol,
                lambda,
                g_init,
                break_source,
                ..VerifyOptions::default()
            };
            finish(cli::cmd_verify(&case, &levels, &opts, &out), |(_, text)| print!("{text}"))
        }
    }
}
