//! Drives a run from a TOML configuration, as the command line does.
//!
//! `cargo run --example config_run -- configs/original.toml out/original`

use std::path::{Path, PathBuf};

use thinfilm::cli::cmd_run;
use thinfilm::config::load_config;

fn main() -> thinfilm::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "configs/original.toml".into()),
    );
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/config_run".into()));
    let cfg = load_config(&path)?;
    let report = cmd_run(&cfg, path.parent().unwrap_or(Path::new(".")), &out)?;
    println!("ok: {}", report.ok);
    if let Some(r) = &report.final_record {
        println!(
            "t = {}, mass h {:.12}, mass gamma {:.12}",
            r.t, r.mass_h, r.mass_gamma
        );
    }
    println!(
        "worst primary slack {:.3e} (tol {:.3e})",
        match report.scheme {
            thinfilm::Scheme::Regularized => report.worst_slack_reg,
            thinfilm::Scheme::Original => report.worst_slack_limit,
        },
        report.ledger_tol
    );
    println!(
        "snapshots in {}: {}",
        out.display(),
        report.snapshots.join(", ")
    );
    Ok(())
}
