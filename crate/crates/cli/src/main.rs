use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depol_core::oracles::two_mode_claims;
use depol_core::scenario::{load_config, run_scenario, Preset, RunOptions, OUT_DIR_ENV};
use depol_core::Result;
use log::warn;

#[derive(Parser)]
#[command(
    name = "depol",
    version,
    about = "Depolarization of quantum light under Lindblad dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write trajectory.csv, metadata.json and final_state.json.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir` in the config.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for ensemble runs (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a scenario file without running it.
    Validate { config: PathBuf },
    /// List the named initial states.
    Presets,
    /// Degree of polarization of the two-mode reference states, computed against the closed forms.
    Report {
        #[arg(long, default_value_t = 0.5)]
        gamma1: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma2: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 2.0])]
        times: Vec<f64>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let cfg = load_config(&config)?;
            let opts = RunOptions {
                out_dir: out,
                seed,
                threads,
            };
            let summary = run_scenario(&cfg, &opts)?;
            for w in &summary.warnings {
                warn!("{w}");
            }
            println!("wrote {} rows to {}", summary.rows, summary.csv.display());
            println!("metadata: {}", summary.metadata.display());
            if let Some(p) = &summary.final_state {
                println!("final state: {}", p.display());
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            println!(
                "{}: ok ({:?}, m = {}, N_max = {})",
                config.display(),
                cfg.model,
                cfg.m,
                cfg.n_max
            );
        }
        Command::Presets => {
            for p in Preset::ALL {
                println!("{:<12} {}", p.name(), p.description());
            }
        }
        Command::Report {
            gamma1,
            gamma2,
            times,
            json,
        } => {
            let rows = two_mode_claims(gamma1, gamma2, &times)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
                return Ok(());
            }
            println!(
                "{:<11} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}",
                "state", "t", "P", "P_closed", "P_nosqrt", "P_claimed", "|rho23|", "singlet"
            );
            for r in rows {
                println!(
                    "{:<11} {:>6.3} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>9.5} {:>9.5}",
                    r.state,
                    r.t,
                    r.p_numeric,
                    r.p_closed_form,
                    r.p_without_sqrt,
                    r.p_claimed,
                    r.coherence_23,
                    r.singlet_population
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Exit code 2 is reserved for invariant drift, so usage errors go to 3.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
