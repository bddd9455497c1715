//! Observed orders of accuracy against a manufactured solution.

use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::study::{mms_verify, MmsPlan};
use thinfilm::{ModelParams, Scheme, SigmaModel};

fn main() -> thinfilm::Result<()> {
    let p = ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, 1e-2, DEFAULT_ETA1)?;
    let rep = mms_verify(Scheme::Original, &p, &MmsPlan::default())?;
    for (label, rows) in [("cells", &rep.spatial), ("dt", &rep.temporal)] {
        println!(
            "{label:>8} {:>12} {:>12} {:>6}",
            "err_h", "err_gamma", "order"
        );
        for r in rows {
            println!(
                "{:>8} {:>12.4e} {:>12.4e} {:>6}",
                r.resolution,
                r.err_h,
                r.err_gamma,
                r.order.map_or("-".into(), |o| format!("{o:.2}"))
            );
        }
    }
    println!(
        "spatial {:.3}, temporal {:.3}",
        rep.spatial_order, rep.temporal_order
    );
    Ok(())
}
