use proptest::prelude::*;
use thinfilm::constitutive::DEFAULT_ETA1;
use thinfilm::diagnostics::{dissipation_limit, dissipation_reg};
use thinfilm::dynamics::{assemble_aux, try_step};
use thinfilm::helmholtz::{smooth, smoothing_estimates};
use thinfilm::{Field, Grid, LogSign, ModelParams, Scheme, SigmaModel, State};

fn sigma_model() -> impl Strategy<Value = SigmaModel> {
    prop_oneof![
        (0.5..3.0f64, 0.2..2.0f64).prop_map(|(s, b)| SigmaModel::linear(s, b).unwrap()),
        (0.5..3.0f64, 0.1..1.0f64, 0.5..2.0f64).prop_map(|(s, b, gi)| SigmaModel::logarithmic(
            s,
            b,
            gi,
            LogSign::Plus,
            10.0
        )
        .unwrap()),
    ]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.2..3.0f64, 0.01..1.0f64, sigma_model(), 1e-3..0.2f64)
        .prop_map(|(g, d, s, eps)| ModelParams::new(g, d, s, eps, DEFAULT_ETA1).unwrap())
}

fn case() -> impl Strategy<Value = (ModelParams, State)> {
    (params(), 4usize..40).prop_flat_map(|(p, n)| {
        let lo_h = p.sqrt_eps() * 1.5;
        let lo_g = p.eps * 1.5;
        (
            Just(p),
            prop::collection::vec(lo_h..2.0, n),
            prop::collection::vec(lo_g..1.5, n),
        )
            .prop_map(move |(p, h, g)| {
                let grid = Grid::new(n, 1.0).unwrap();
                let s = State::new(
                    0.0,
                    Field::new(grid, h).unwrap(),
                    Field::new(grid, g).unwrap(),
                )
                .unwrap();
                (p, s)
            })
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_steps_conserve_mass((p, s) in case(), scheme_reg in any::<bool>(), k in 0.01..1.0f64) {
        let scheme = if scheme_reg { Scheme::Regularized } else { Scheme::Original };
        let dx = s.grid().dx();
        if let Ok(next) = try_step(&s, &p, k * dx * dx, scheme, None).unwrap() {
            prop_assert!(rel(next.mass_h(), s.mass_h()) <= 1e-12);
            prop_assert!(rel(next.mass_gamma(), s.mass_gamma()) <= 1e-12);
        }
    }

    #[test]
    fn constants_are_fixed_points(p in params(), n in 4usize..50, h in 0.5..2.0f64, g in 0.2..1.0f64, scheme_reg in any::<bool>()) {
        let scheme = if scheme_reg { Scheme::Regularized } else { Scheme::Original };
        let grid = Grid::new(n, 1.0).unwrap();
        let s = State::new(0.0, Field::constant(grid, h), Field::constant(grid, g)).unwrap();
        let next = try_step(&s, &p, 1e-3, scheme, None).unwrap().unwrap();
        for (a, b) in next.h.values().iter().zip(s.h.values()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
        for (a, b) in next.gamma.values().iter().zip(s.gamma.values()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn dissipation_terms_are_nonnegative((p, s) in case()) {
        let aux = assemble_aux(&s, &p).unwrap();
        for t in dissipation_reg(&s, &aux, &p).unwrap().terms {
            prop_assert!(t >= 0.0);
        }
        for t in dissipation_limit(&s, &p).unwrap().terms {
            prop_assert!(t >= 0.0);
        }
    }

    #[test]
    fn smoothing_preserves_mean_and_range(values in prop::collection::vec(0.0..10.0f64, 4..60), eps in 1e-3..0.5f64) {
        let grid = Grid::new(values.len(), 1.0).unwrap();
        let f = Field::new(grid, values).unwrap();
        let u = smooth(&f, eps).unwrap();
        prop_assert!(rel(u.integral(), f.integral()) <= 1e-12 || f.integral() == 0.0);
        prop_assert!(u.min() >= f.min() - 1e-12);
        prop_assert!(u.max() <= f.max() + 1e-12);
        prop_assert!(smoothing_estimates(&f, &u, eps).all_hold());
    }

    #[test]
    fn sigma_is_decreasing_and_phi_nonnegative(model in sigma_model(), a in 0.0..5.0f64, b in 0.0..5.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(model.sigma(hi).unwrap() < model.sigma(lo).unwrap());
        prop_assert!(model.phi(lo).unwrap() >= 0.0);
        prop_assert!(model.beta1_prime(hi.max(1e-6)).unwrap() > 0.0);
    }
}
