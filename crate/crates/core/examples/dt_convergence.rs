//! Fixed-step self-convergence in time of the regularized scheme.

use std::f64::consts::PI;

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::study::{dt_selfconvergence, sample_times};
use thinfilm::{Field, Grid, ModelParams, Scheme, SigmaModel, State};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(64, 1.0)?;
    let eps = 1e-2;
    let p = ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, eps, DEFAULT_ETA1)?;
    let initial = State::lifted(
        0.0,
        &Field::from_fn(grid, |x| 1.0 + 0.5 * (PI * x).cos()),
        &Field::from_fn(grid, |x| 0.5 + 0.4 * (PI * x).cos()),
        eps,
    )?;
    let rows = dt_selfconvergence(
        &initial,
        &p,
        Scheme::Regularized,
        &sample_times(0.05, 10),
        &[4e-4, 2e-4, 1e-4, 5e-5],
    )?;
    for r in rows {
        println!(
            "{:.1e} vs {:.1e}: h {:.3e}, gamma {:.3e}, order {}",
            r.dt_a,
            r.dt_b,
            r.h.l2_qt,
            r.gamma.l2_qt,
            r.order.map_or("-".into(), |o| format!("{o:.2}"))
        );
    }
    Ok(())
}
