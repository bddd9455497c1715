//! The unregularized system with a logarithmic tension law, and the monitor
//! of its a-priori bounds along the trajectory.

use std::f64::consts::PI;

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::diagnostics::uniform_estimates_monitor;
use thinfilm::dynamics::{run, RunOptions};
use thinfilm::{Field, Grid, LogSign, ModelParams, Scheme, SigmaModel, State, StepControl};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(100, 2.0)?;
    let sigma = SigmaModel::logarithmic(1.0, 0.5, 1.0, LogSign::Plus, 10.0)?;
    let p = ModelParams::new(1.0, 0.1, sigma, 1e-2, DEFAULT_ETA1)?;
    let initial = State::new(
        0.0,
        Field::from_fn(grid, |x| 0.5 + 0.45 * (PI * x).cos()),
        Field::from_fn(grid, |x| 1.0 + 0.8 * (PI * x).cos()),
    )?;

    let mut trajectory = vec![initial.clone()];
    let mut keep = |s: &State, landmark: bool| {
        if landmark {
            trajectory.push(s.clone());
        }
        Ok(())
    };
    let opts = RunOptions {
        t_end: 0.1,
        scheme: Scheme::Original,
        landmarks: (1..10).map(|k| k as f64 * 0.01).collect(),
    };
    let out = run(
        &initial,
        &p,
        &StepControl::for_grid(&grid, 2.0)?,
        &opts,
        &mut keep,
    )?;
    trajectory.push(out.final_state.clone());
    println!(
        "{} steps, min h {:.4}",
        out.stats.accepted,
        out.final_state.h.min()
    );

    let m = uniform_estimates_monitor(&trajectory, &p)?;
    println!("sup |h|_2        {:.4}", m.sup_h_l2);
    println!("sup entropy      {:.4}", m.sup_entropy);
    println!("int |j_f|^2      {:.4}", m.flux_budget_f);
    println!("int |j_s|^2      {:.4}", m.flux_budget_s);
    println!("regularity       {:.4}", m.regularity_budget);
    println!("sup Hoelder 1/5  {:.4}", m.sup_holder);
    Ok(())
}
