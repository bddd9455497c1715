//! Constant states do not move under either scheme.

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::dynamics::{run, NoObserver, RunOptions};
use thinfilm::{Field, Grid, ModelParams, Scheme, SigmaModel, State, StepControl};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(128, 1.0)?;
    let p = ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, 1e-2, DEFAULT_ETA1)?;
    let s = State::new(0.0, Field::constant(grid, 0.8), Field::constant(grid, 0.35))?;
    for scheme in [Scheme::Regularized, Scheme::Original] {
        let opts = RunOptions {
            t_end: 0.1,
            scheme,
            landmarks: vec![],
        };
        let out = run(
            &s,
            &p,
            &StepControl::for_grid(&grid, 2.0)?,
            &opts,
            &mut NoObserver,
        )?;
        let fin = &out.final_state;
        let drift = fin
            .h
            .values()
            .iter()
            .zip(s.h.values())
            .chain(fin.gamma.values().iter().zip(s.gamma.values()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{scheme:?}: {} steps, sup drift {drift:.2e}",
            out.stats.accepted
        );
    }
    Ok(())
}
