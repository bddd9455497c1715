//! Cosine bump under the regularized flow, with the energy ledger.

use std::f64::consts::PI;

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::diagnostics::LedgerObserver;
use thinfilm::dynamics::{run, RunOptions};
use thinfilm::{Field, Grid, ModelParams, Scheme, SigmaModel, State, StepControl};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(128, 1.0)?;
    let eps = 1e-2;
    let p = ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, eps, DEFAULT_ETA1)?;
    let h0 = Field::from_fn(grid, |x| 1.0 + 0.5 * (PI * x).cos());
    let g0 = Field::from_fn(grid, |x| 0.5 + 0.4 * (PI * x).cos());
    let initial = State::lifted(0.0, &h0, &g0, eps)?;

    let mut obs = LedgerObserver::new(p, Scheme::Regularized, 50);
    let opts = RunOptions {
        t_end: 0.2,
        scheme: Scheme::Regularized,
        landmarks: vec![0.05, 0.1, 0.15],
    };
    let out = run(
        &initial,
        &p,
        &StepControl::for_grid(&grid, 2.0)?,
        &opts,
        &mut obs,
    )?;
    println!(
        "{} accepted, {} rejected, dt in [{:.2e}, {:.2e}]",
        out.stats.accepted, out.stats.rejected, out.stats.dt_smallest, out.stats.dt_largest
    );

    let report = obs.ledger.ledger_check(None);
    println!(
        "{:>8} {:>12} {:>12} {:>12}",
        "t", "slack_reg", "slack_limit", "defect"
    );
    for row in report.rows.iter().step_by(4) {
        println!(
            "{:>8.4} {:>12.4e} {:>12.4e} {:>12.4e}",
            row.t,
            row.slack_reg.unwrap_or(f64::NAN),
            row.slack_limit,
            row.defect.unwrap_or(f64::NAN)
        );
    }
    println!(
        "tol {:.3e}, violations {}",
        report.tol,
        report.violations.len()
    );
    Ok(())
}
