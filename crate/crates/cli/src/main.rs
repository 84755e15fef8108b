use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use stabsel_cli::commands::{cmd_posterior, cmd_run, cmd_simulate, cmd_sweep, POSTERIORS_FILE};
use stabsel_cli::config::{self, PriorsRef, ServeConfig};
use stabsel_cli::server::Server;
use stabsel_core::data::{Scenario, SyntheticConfig};
use stabsel_core::sweep::SweepMode;

#[derive(Parser)]
#[command(name = "stabsel", version, about = "Bayesian stability selection")]
struct Cli {
    /// Worker threads for subsampling and cross-validation.
    #[arg(long, global = true, env = "STABSEL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run stability selection and write matrix, frequencies and posteriors.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Number of subsamples.
        #[arg(long)]
        b: Option<usize>,
        /// Subsampling seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pi_thr: Option<f64>,
        #[arg(long)]
        ci_level: Option<f64>,
        /// Prior file, or "non-informative".
        #[arg(long)]
        priors: Option<String>,
    },
    /// Count correct and incorrect selections over a grid of elicitation answers.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
        /// replicated, average-frequency or fixed.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SweepMode>,
    },
    /// Write a synthetic dataset as CSV (response column `y`).
    Simulate {
        /// correlated-blocks, decaying or independent.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        p: usize,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Posterior report for an existing selection matrix.
    Posterior {
        #[arg(long)]
        matrix: PathBuf,
        /// Prior file; variables it does not list get Beta(1, 1).
        #[arg(long)]
        priors: Option<PathBuf>,
        #[arg(long, default_value_t = 0.6)]
        pi_thr: f64,
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        /// Output file or directory; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API (and the UI bundle, if given).
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    match s {
        "correlated-blocks" => Ok(Scenario::CorrelatedBlocks),
        "decaying" => Ok(Scenario::Decaying),
        "independent" => Ok(Scenario::Independent),
        _ => Err(format!("unknown scenario '{s}' (correlated-blocks, decaying, independent)")),
    }
}

fn parse_mode(s: &str) -> Result<SweepMode, String> {
    match s {
        "replicated" => Ok(SweepMode::Replicated),
        "average-frequency" => Ok(SweepMode::AverageFrequency),
        "fixed" => Ok(SweepMode::Fixed),
        _ => Err(format!("unknown mode '{s}' (replicated, average-frequency, fixed)")),
    }
}

fn execute(cli: Cli) -> Result<()> {
    stabsel_cli::init_threads(cli.threads)?;
    match cli.command {
        Command::Run { config, output_dir, b, seed, pi_thr, ci_level, priors } => {
            let mut job = config::load_job(&config)?;
            if let Some(v) = output_dir {
                job.output_dir = v;
            }
            if let Some(v) = b {
                job.stability.b = v;
            }
            if let Some(v) = seed {
                job.stability.seed = v;
            }
            if let Some(v) = pi_thr {
                job.pi_thr = v;
            }
            if let Some(v) = ci_level {
                job.ci_level = v;
            }
            if let Some(v) = priors {
                job.priors = PriorsRef::from(v);
            }
            let summary = cmd_run(&job)?;
            let selected = summary.rows.iter().filter(|r| r.posterior.selected).count();
            println!(
                "lambda {:.6}; {selected} of {} variables selected; results in {}",
                summary.lambda,
                summary.rows.len(),
                summary.output_dir.display()
            );
        }
        Command::Sweep { config, output_dir, replications, mode } => {
            let mut job = config::load_sweep(&config)?;
            if let Some(v) = output_dir {
                job.output_dir = v;
            }
            if let Some(v) = replications {
                job.replications = v;
            }
            if let Some(v) = mode {
                job.mode = v;
            }
            let grid = cmd_sweep(&job)?;
            println!(
                "{} x {} grid ({} mode, {} replications) written to {}",
                grid.zeta_grid.len(),
                grid.xi_grid.len(),
                grid.mode,
                grid.replications,
                job.output_dir.display()
            );
        }
        Command::Simulate { scenario, n, p, sigma, seed, output } => {
            cmd_simulate(&SyntheticConfig { scenario, n, p, sigma, seed }, &output)?;
        }
        Command::Posterior { matrix, priors, pi_thr, ci_level, output } => {
            let priors = priors.map_or(PriorsRef::NonInformative, PriorsRef::File);
            let csv = cmd_posterior(&matrix, &priors, pi_thr, ci_level)?;
            match output {
                None => print!("{csv}"),
                Some(path) => {
                    let path = if path.is_dir() { path.join(POSTERIORS_FILE) } else { path };
                    std::fs::write(&path, csv).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
                }
            }
        }
        Command::Serve { config, host, port, ui_dir } => {
            let mut cfg = match config {
                Some(path) => config::load_serve(&path)?,
                None => ServeConfig::default(),
            };
            if let Some(v) = host {
                cfg.host = v;
            }
            if let Some(v) = port {
                cfg.port = v;
            }
            if ui_dir.is_some() {
                cfg.ui_dir = ui_dir;
            }
            if cfg.host != "127.0.0.1" && cfg.host != "localhost" && cfg.host != "::1" {
                log::warn!("listening on {}, not loopback; the API has no authentication", cfg.host);
            }
            if cfg.port == 0 {
                bail!("port must be between 1 and 65535");
            }
            let server = Server::bind(&cfg.host, cfg.port, cfg.ui_dir)?;
            eprintln!("listening on http://{}:{}", cfg.host, cfg.port);
            server.run();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
