use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thinfilm::cli::{cmd_check_config, cmd_mms, cmd_run, cmd_sweep, output_dir};
use thinfilm::config::load_config;

#[derive(Parser)]
#[command(version, about = "Thin-film surfactant simulator")]
struct Args {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run(Common),
    /// Run the eps self-convergence sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: available parallelism).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Manufactured-solution order study.
    Mms(Common),
    /// Validate a configuration file.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides THINFILM_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> thinfilm::Result<bool> {
    match command {
        Command::CheckConfig { config } => {
            let cfg = cmd_check_config(&config)?;
            println!(
                "ok: {} cells, scheme {:?}, eps {}",
                cfg.grid.n_cells, cfg.model.scheme, cfg.model.eps
            );
            Ok(true)
        }
        Command::Run(c) => {
            let cfg = load_config(&c.config)?;
            let out = output_dir(&cfg, c.out.as_deref());
            let report = cmd_run(&cfg, base(&c.config), &out)?;
            if let Some(f) = &report.failure {
                eprintln!("run failed at t = {}: {}", f.t, f.message);
            }
            for v in &report.violations {
                eprintln!(
                    "violation at t = {}: {} (slack {})",
                    v.t, v.quantity, v.slack
                );
            }
            log::info!("outputs in {}", out.display());
            Ok(report.ok)
        }
        Command::Sweep { common: c, workers } => {
            let cfg = load_config(&c.config)?;
            let out = output_dir(&cfg, c.out.as_deref());
            let report = cmd_sweep(&cfg, base(&c.config), &cfg.sweep.eps, &out, workers)?;
            for m in report.members.iter().filter(|m| !m.ok) {
                eprintln!(
                    "member eps = {} failed: {}",
                    m.eps,
                    m.error.as_deref().unwrap_or("ledger violation")
                );
            }
            if !report.strictly_decreasing {
                eprintln!("sweep distances are not strictly decreasing");
            }
            Ok(report.ok)
        }
        Command::Mms(c) => {
            let cfg = load_config(&c.config)?;
            let out = output_dir(&cfg, c.out.as_deref());
            let o = cmd_mms(&cfg, &out)?;
            println!(
                "spatial order {:.3}, temporal order {:.3}",
                o.report.spatial_order, o.report.temporal_order
            );
            Ok(o.ok)
        }
    }
}

fn base(config: &std::path::Path) -> &std::path::Path {
    config.parent().unwrap_or(std::path::Path::new("."))
}
