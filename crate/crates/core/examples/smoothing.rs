//! Applies the Neumann smoothing operator to a rough profile and checks its
//! discrete estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinfilm::helmholtz::{smooth, smoothing_estimates};
use thinfilm::{Field, Grid};

fn main() -> thinfilm::Result<()> {
    let grid = Grid::new(64, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = Field::new(grid, (0..64).map(|_| rng.gen_range(0.0..2.0)).collect())?;
    for eps in [0.3, 0.1, 0.03] {
        let u = smooth(&f, eps)?;
        println!(
            "eps = {eps}: range [{:.4}, {:.4}] -> [{:.4}, {:.4}]",
            f.min(),
            f.max(),
            u.min(),
            u.max()
        );
        for c in smoothing_estimates(&f, &u, eps).checks {
            println!(
                "  {:<24} lhs {:>11.4e}  rhs {:>11.4e}  {}",
                c.name,
                c.lhs,
                c.rhs,
                if c.holds { "ok" } else { "FAILS" }
            );
        }
    }
    Ok(())
}
