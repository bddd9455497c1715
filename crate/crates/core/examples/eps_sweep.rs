//! Self-convergence of the regularized trajectories as eps decreases.

use std::f64::consts::PI;

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::study::{eps_sweep, sample_times, SweepPlan};
use thinfilm::{Field, Grid, ModelParams, SigmaModel};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(64, 1.0)?;
    let plan = SweepPlan {
        eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
        grid,
        params: ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, 1e-1, DEFAULT_ETA1)?,
        h0: Field::from_fn(grid, |x| 1.0 + 0.5 * (PI * x).cos()),
        gamma0: Field::from_fn(grid, |x| 0.5 + 0.4 * (PI * x).cos()),
        t_end: 0.1,
        dt_max_factor: 2.0,
        times: sample_times(0.1, 20),
        workers: 0,
    };
    let table = eps_sweep(&plan)?;
    println!(
        "{:>8} {:>8} {:>12} {:>12} {:>7}",
        "eps_a", "eps_b", "h", "gamma", "rate_h"
    );
    for r in &table.rows {
        println!(
            "{:>8.0e} {:>8.0e} {:>12.4e} {:>12.4e} {:>7}",
            r.eps_a,
            r.eps_b,
            r.h.map_or(f64::NAN, |d| d.l2_qt),
            r.gamma.map_or(f64::NAN, |d| d.l2_qt),
            r.rate_h.map_or("-".into(), |v| format!("{v:.2}"))
        );
    }
    println!("strictly decreasing: {}", table.strictly_decreasing());
    Ok(())
}
