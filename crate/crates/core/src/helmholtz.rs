//! Neumann Helmholtz solves: the smoother `u - eps^2 u'' = f` and the screened
//! surface pressure `S - eps^2 (H S')' = sigma(Gamma)`.
//!
//! Both are assembled cell-centered with a reflective boundary stencil, which
//! makes the matrices symmetric M-matrices with unit row sums. Constants are
//! fixed points, mass is preserved and the discrete maximum principle holds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{discrete_norm, face_gradient, flux_divergence, Field, Norm};

/// Tolerance applied to the `H >= sqrt(eps)` precondition.
pub const BARRIER_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalSystem {
    /// `lower[i]` couples row `i` to `i - 1`; `lower[0]` is unused.
    pub lower: Vec<f64>,
    pub diagonal: Vec<f64>,
    /// `upper[i]` couples row `i` to `i + 1`; the last entry is unused.
    pub upper: Vec<f64>,
}

impl TridiagonalSystem {
    /// Symmetric system `I + K` where `K` is the Neumann stiffness with face
    /// weights `w[k]` (`k = 1..n-1` interior faces; `w[0]`, `w[n]` ignored).
    pub fn neumann(face_weights: &[f64]) -> Self {
        let n = face_weights.len() - 1;
        let mut lower = vec![0.0; n];
        let mut diagonal = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for k in 1..n {
            let w = face_weights[k];
            diagonal[k - 1] += w;
            diagonal[k] += w;
            upper[k - 1] = -w;
            lower[k] = -w;
        }
        Self {
            lower,
            diagonal,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Thomas elimination. Stable without pivoting for the diagonally
    /// dominant systems assembled here.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n || n < 2 {
            return Err(Error::Shape {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut denom = self.diagonal[0];
        c[0] = self.upper[0] / denom;
        x[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diagonal[i] - self.lower[i] * c[i - 1];
            if i + 1 < n {
                c[i] = self.upper[i] / denom;
            }
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "tridiagonal solution",
                index,
            });
        }
        Ok(x)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("eps must lie in (0, 1), got {eps}")))
    }
}

/// Discrete smoothing operator: solves `u - eps^2 u'' = f` with `u' = 0` at
/// both ends.
pub fn smooth(f: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    if let Some(index) = f.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "smoothing input",
            index,
        });
    }
    let grid = *f.grid();
    let w = eps * eps / (grid.dx() * grid.dx());
    let sys = TridiagonalSystem::neumann(&vec![w; grid.n_faces()]);
    Ok(Field::from_vec_unchecked(grid, sys.solve(f.values())?))
}

/// Screened surface pressure: solves `S - eps^2 (H S')' = sigma_gamma` with
/// `S' = 0` at both ends, `H` averaged arithmetically onto faces.
pub fn surface_pressure(sigma_gamma: &Field, smoothed_h: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    let grid = *sigma_gamma.grid();
    if smoothed_h.len() != grid.n_cells() {
        return Err(Error::Shape {
            expected: grid.n_cells(),
            got: smoothed_h.len(),
        });
    }
    let floor = eps.sqrt() - BARRIER_TOL;
    if let Some(i) = smoothed_h.values().iter().position(|&v| !(v >= floor)) {
        return Err(Error::Barrier(format!(
            "smoothed height {} below sqrt(eps) = {} in cell {i}",
            smoothed_h[i],
            eps.sqrt()
        )));
    }
    let c = eps * eps / (grid.dx() * grid.dx());
    let hv = smoothed_h.values();
    let mut weights = vec![0.0; grid.n_faces()];
    for k in 1..grid.n_cells() {
        weights[k] = c * 0.5 * (hv[k - 1] + hv[k]);
    }
    let sys = TridiagonalSystem::neumann(&weights);
    Ok(Field::from_vec_unchecked(
        grid,
        sys.solve(sigma_gamma.values())?,
    ))
}

/// One discrete inequality `lhs <= rhs`, with its measured slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl EstimateCheck {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        // allowance for accumulated rounding in the two sums
        let allowance = 1e-12 * lhs.abs().max(rhs.abs()) + 1e-20;
        Self {
            name,
            lhs,
            rhs,
            slack,
            holds: slack >= -allowance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub checks: Vec<EstimateCheck>,
}

impl EstimateReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&EstimateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn min_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates the discrete smoothing estimates for `u = smooth(f, eps)`:
/// `Lp` contraction (`p = 1, 2, inf`), the gradient-energy bound
/// `|u'|^2 + 2 eps^2 |u''|^2 <= |f'|^2`, and, for nonnegative `f`, the
/// sup-gradient bound `eps^2 |u'|_inf <= |f|_1`.
pub fn smoothing_estimates(f: &Field, u: &Field, eps: f64) -> EstimateReport {
    let mut checks: Vec<EstimateCheck> = Norm::ALL
        .iter()
        .zip(["contraction_l1", "contraction_l2", "contraction_linf"])
        .map(|(&p, name)| EstimateCheck::new(name, discrete_norm(u, p), discrete_norm(f, p)))
        .collect();

    let du = face_gradient(u);
    let d2u = flux_divergence(&du).expect("face gradient has zero boundary entries");
    let df = face_gradient(f);
    let lhs = du.l2_squared() + 2.0 * eps * eps * discrete_norm(&d2u, Norm::L2).powi(2);
    checks.push(EstimateCheck::new("gradient_energy", lhs, df.l2_squared()));

    if f.min() >= 0.0 {
        checks.push(EstimateCheck::new(
            "sup_gradient",
            eps * eps * du.max_abs(),
            discrete_norm(f, Norm::L1),
        ));
    }
    EstimateReport { checks }
}

/// Discrete surface-pressure estimates for `s = surface_pressure(sg, h_smooth, eps)`:
/// `|s|_1 <= |sg|_1`, the weighted gradient bound
/// `|sqrt(H) s'|^2 + 2 eps^2 |(H s')'|^2 <= |sqrt(H) sg'|^2` and
/// `eps^2 |H s'|_inf <= 2 |sg|_1`.
pub fn pressure_estimates(
    sigma_gamma: &Field,
    smoothed_h: &Field,
    s: &Field,
    eps: f64,
) -> EstimateReport {
    let grid = *s.grid();
    let n = grid.n_cells();
    let hv = smoothed_h.values();
    let mut flux = face_gradient(s);
    let ds = flux.clone();
    let dsg = face_gradient(sigma_gamma);
    let mut weighted_s = 0.0;
    let mut weighted_sg = 0.0;
    for k in 1..n {
        let hf = 0.5 * (hv[k - 1] + hv[k]);
        flux.values_mut()[k] *= hf;
        weighted_s += hf * ds[k] * ds[k];
        weighted_sg += hf * dsg[k] * dsg[k];
    }
    weighted_s *= grid.dx();
    weighted_sg *= grid.dx();
    let div = flux_divergence(&flux).expect("zero boundary flux");
    let l1_sg = discrete_norm(sigma_gamma, Norm::L1);
    EstimateReport {
        checks: vec![
            EstimateCheck::new("pressure_l1", discrete_norm(s, Norm::L1), l1_sg),
            EstimateCheck::new(
                "pressure_gradient_energy",
                weighted_s + 2.0 * eps * eps * discrete_norm(&div, Norm::L2).powi(2),
                weighted_sg,
            ),
            EstimateCheck::new("pressure_sup_flux", eps * eps * flux.max_abs(), 2.0 * l1_sg),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting; independent of the
    /// Thomas sweep.
    pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let m = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= m * a[col][k];
                }
                b[row] -= m * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    /// Dense matrix of `v - eps^2 (c v')'` with reflective closure, built by
    /// ghost-cell reflection `v_{-1} = v_0`, `v_n = v_{n-1}`.
    fn dense_operator(
        n: usize,
        dx: f64,
        eps: f64,
        face_coef: impl Fn(usize) -> f64,
    ) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        let s = eps * eps / (dx * dx);
        for i in 0..n {
            a[i][i] += 1.0;
            let left = if i == 0 { 0.0 } else { face_coef(i) };
            let right = if i == n - 1 { 0.0 } else { face_coef(i + 1) };
            a[i][i] += s * (left + right);
            if i > 0 {
                a[i][i - 1] -= s * left;
            }
            if i + 1 < n {
                a[i][i + 1] -= s * right;
            }
        }
        a
    }

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
        Field::new(
            grid,
            (0..grid.n_cells()).map(|_| rng.gen_range(lo..hi)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = Grid::new(33, 2.0).unwrap();
        let u = smooth(&Field::constant(g, 1.7), 0.3).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.7).abs() < 1e-14));
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let h = random_field(g, &mut rng, 0.6, 3.0);
        let s = surface_pressure(&Field::constant(g, -0.4), &h, 0.2).unwrap();
        assert!(s.values().iter().all(|v| (v + 0.4).abs() < 1e-14));
    }

    #[test]
    fn smooth_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, eps) in &[(16usize, 0.3), (64, 0.05), (100, 0.9)] {
            let g = Grid::new(n, 1.0).unwrap();
            let f = random_field(g, &mut rng, -1.0, 2.0);
            let u = smooth(&f, eps).unwrap();
            let oracle = dense_solve(dense_operator(n, g.dx(), eps, |_| 1.0), f.values().to_vec());
            for (a, b) in u.values().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pressure_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let g = Grid::new(48, 1.5).unwrap();
        let eps: f64 = 0.1;
        let h = random_field(g, &mut rng, eps.sqrt(), 4.0);
        let sg = random_field(g, &mut rng, -1.0, 2.0);
        let s = surface_pressure(&sg, &h, eps).unwrap();
        let hv = h.values().to_vec();
        let a = dense_operator(48, g.dx(), eps, |k| 0.5 * (hv[k - 1] + hv[k]));
        let oracle = dense_solve(a, sg.values().to_vec());
        for (a, b) in s.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_with_unit_height_is_the_smoother() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = Grid::new(40, 1.0).unwrap();
        let sg = random_field(g, &mut rng, 0.0, 2.0);
        let a = surface_pressure(&sg, &Field::constant(g, 1.0), 0.2).unwrap();
        let b = smooth(&sg, 0.2).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_rejects_breached_barrier() {
        let g = Grid::new(8, 1.0).unwrap();
        let mut h = vec![1.0; 8];
        h[3] = 0.05;
        let h = Field::new(g, h).unwrap();
        let r = surface_pressure(&Field::constant(g, 1.0), &h, 0.01);
        assert!(matches!(r, Err(Error::Barrier(_))));
    }

    #[test]
    fn rejects_bad_input() {
        let g = Grid::new(8, 1.0).unwrap();
        assert!(smooth(&Field::constant(g, 1.0), 0.0).is_err());
        assert!(smooth(&Field::constant(g, 1.0), 1.0).is_err());
    }

    #[test]
    fn maximum_principle_mass_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let g = Grid::new(64, 1.0).unwrap();
        for _ in 0..20 {
            let f = random_field(g, &mut rng, -3.0, 5.0);
            let u = smooth(&f, 0.07).unwrap();
            assert!(u.min() >= f.min() && u.max() <= f.max());
            assert!((u.integral() - f.integral()).abs() < 1e-13);

            let half: Vec<f64> = f.values()[..32].to_vec();
            let mirrored: Vec<f64> = half.iter().chain(half.iter().rev()).copied().collect();
            let u = smooth(&Field::new(g, mirrored).unwrap(), 0.07).unwrap();
            for i in 0..32 {
                assert!((u[i] - u[63 - i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn smoothing_error_decreases_with_eps() {
        let g = Grid::new(128, 1.0).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * std::f64::consts::PI * x).cos() + x * x);
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| {
                let u = smooth(&f, e).unwrap();
                u.values()
                    .iter()
                    .zip(f.values())
                    .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn estimates_for_constants_and_bumps() {
        let g = Grid::new(50, 1.0).unwrap();
        let f = Field::constant(g, 2.0);
        let u = smooth(&f, 0.3).unwrap();
        let rep = smoothing_estimates(&f, &u, 0.3);
        assert!(rep.all_hold(), "{rep:?}");
        assert!(rep.get("gradient_energy").unwrap().lhs < 1e-20);

        let f = Field::from_fn(g, |x| 1.0 + (-40.0 * (x - 0.4).powi(2)).exp());
        let u = smooth(&f, 0.05).unwrap();
        let rep = smoothing_estimates(&f, &u, 0.05);
        assert_eq!(rep.checks.len(), 5);
        assert!(rep.all_hold());
        for c in &rep.checks[1..] {
            assert!(c.slack > 0.0, "{c:?}");
        }
    }

    #[test]
    fn spike_sup_gradient() {
        let g = Grid::new(64, 1.0).unwrap();
        let mut v = vec![0.0; 64];
        v[20] = 3.0 / g.dx();
        let f = Field::new(g, v).unwrap();
        for eps in [0.5, 0.1, 0.01] {
            let u = smooth(&f, eps).unwrap();
            let du = face_gradient(&u);
            assert!(eps * eps * du.max_abs() <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn pressure_estimates_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let g = Grid::new(64, 1.0).unwrap();
        for _ in 0..20 {
            let eps: f64 = rng.gen_range(0.01..0.5);
            let h = random_field(g, &mut rng, eps.sqrt(), 3.0);
            let sg = random_field(g, &mut rng, 0.0, 2.0);
            let s = surface_pressure(&sg, &h, eps).unwrap();
            let rep = pressure_estimates(&sg, &h, &s, eps);
            assert!(rep.all_hold(), "{rep:?}");
        }
    }
}
