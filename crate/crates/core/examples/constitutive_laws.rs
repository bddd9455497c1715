//! Tabulates the surface-tension laws and the regularized mobilities.

use thinfilm::constitutive::{a2, b2, DEFAULT_ETA1};
use thinfilm::{LogSign, ModelParams, SigmaModel};

fn main() -> thinfilm::Result<()> {
    let models = [
        ("linear", SigmaModel::linear(2.0, 1.0)?),
        (
            "log+",
            SigmaModel::logarithmic(1.0, 0.5, 1.0, LogSign::Plus, 10.0)?,
        ),
        (
            "log-",
            SigmaModel::logarithmic(2.0, -0.8, 4.0, LogSign::Minus, 3.0)?,
        ),
    ];
    for (name, m) in &models {
        println!("{name}: sigma0 = {:.4}", m.sigma0());
        println!(
            "  {:>6} {:>10} {:>10} {:>10} {:>10}",
            "gamma", "sigma", "sigma'", "beta1'", "phi"
        );
        for r in [0.1, 0.5, 1.0, 2.0] {
            println!(
                "  {r:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                m.sigma(r)?,
                m.sigma_prime(r)?,
                m.beta1_prime(r)?,
                m.phi(r)?
            );
        }
    }

    let p = ModelParams::new(1.0, 0.1, SigmaModel::linear(2.0, 1.0)?, 1e-2, DEFAULT_ETA1)?;
    println!("\nmobilities at eps = {}", p.eps);
    println!(
        "  {:>6} {:>10} {:>10} {:>10} {:>10}",
        "r", "a1", "a2", "b2", "alpha1"
    );
    for r in [0.1, 0.2, 0.5, 1.0, 2.0] {
        println!(
            "  {r:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            p.a1(r),
            a2(r, p.sqrt_eps()),
            b2(r, p.eps),
            p.alpha1(r)
        );
    }
    Ok(())
}
