//! Conservation, barrier and energy observables, and the energy ledger that
//! accumulates them along a trajectory.
//!
//! The regularized dissipation is recorded term by term:
//!
//! | index | term |
//! |---|---|
//! | 0 | `G |J_f|^2` |
//! | 1 | `|J_s|^2` |
//! | 2 | `(eta1 - eta) |sqrt(H) d sigma|^2` |
//! | 3 | `(1 - eta1) |sqrt(h) d sigma|^2` |
//! | 4 | `(1 - eta) G |d alpha1(h)|^2` |
//! | 5 | `2 D int |d sigma|^2 / beta1'(B)` |
//!
//! and the limit dissipation as `G |j_f|^2`, `|j_s|^2`, `(G^2/75) |d h^{5/2}|^2`,
//! `(1/4) |sqrt(h) d sigma|^2`, `8 sigma0 D |d sqrt(gamma)|^2`. Both totals are
//! half the sum of their terms.

use serde::Serialize;

use crate::constitutive::{ModelParams, ETA};
use crate::dynamics::{
    assemble_aux, fluxes_j, fluxes_j_limit, original_fluxes, regularized_fluxes, AuxFields,
    Observer, Scheme, State, TOL_POS,
};
use crate::error::{Error, Result};
use crate::grid::{discrete_norm, face_gradient, Field, Norm};

/// `int [(G/2) h^2 + phi(gamma)] dx` by the midpoint rule.
pub fn lyapunov(state: &State, params: &ModelParams) -> Result<f64> {
    let dx = state.grid().dx();
    let mut sum = 0.0;
    for (&h, &g) in state.h.values().iter().zip(state.gamma.values()) {
        sum += 0.5 * params.g * h * h + params.sigma.phi(g)?;
    }
    Ok(sum * dx)
}

/// Lyapunov functional of the regularized flow.
pub fn lyapunov_reg(state: &State, params: &ModelParams) -> Result<f64> {
    lyapunov(state, params)
}

/// Lyapunov functional of the limit problem; same form as [`lyapunov_reg`].
pub fn lyapunov_limit(state: &State, params: &ModelParams) -> Result<f64> {
    lyapunov(state, params)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dissipation<const N: usize> {
    pub terms: [f64; N],
}

impl<const N: usize> Dissipation<N> {
    pub fn total(&self) -> f64 {
        0.5 * self.terms.iter().sum::<f64>()
    }
}

pub fn dissipation_reg(
    state: &State,
    aux: &AuxFields,
    params: &ModelParams,
) -> Result<Dissipation<6>> {
    let grid = *state.grid();
    let n = grid.n_cells();
    let dx = grid.dx();
    let (jf, js) = fluxes_j(state, aux, params)?;
    let (h, g) = (state.h.values(), state.gamma.values());
    let (hs, bs) = (aux.h_smooth.values(), aux.gamma_smooth.values());
    let floor = params.sigma.sigma0() * params.eps;
    let mut t = [0.0; 6];
    t[0] = params.g * jf.l2_squared();
    t[1] = js.l2_squared();
    for k in 1..n {
        let hf = 0.5 * (h[k - 1] + h[k]);
        let gf = 0.5 * (g[k - 1] + g[k]);
        let hsf = 0.5 * (hs[k - 1] + hs[k]);
        let bf = 0.5 * (bs[k - 1] + bs[k]);
        let b1p = params.sigma.beta1_prime_unchecked(bf);
        if b1p < 0.5 * floor {
            return Err(Error::Barrier(format!(
                "beta1'(B) = {b1p} below sigma0 eps / 2 at face {k}"
            )));
        }
        let ds = params.sigma.sigma_prime_unchecked(gf) * (g[k] - g[k - 1]) / dx;
        let dh = (h[k] - h[k - 1]) / dx;
        t[2] += hsf * ds * ds;
        t[3] += hf * ds * ds;
        t[4] += params.a1(hf) * dh * dh;
        t[5] += ds * ds / b1p;
    }
    t[2] *= (params.eta1 - ETA) * dx;
    t[3] *= (1.0 - params.eta1) * dx;
    t[4] *= (1.0 - ETA) * params.g * dx;
    t[5] *= 2.0 * params.d * dx;
    Ok(Dissipation { terms: t })
}

pub fn dissipation_limit(state: &State, params: &ModelParams) -> Result<Dissipation<5>> {
    let grid = *state.grid();
    let n = grid.n_cells();
    let (jf, js) = fluxes_j_limit(state, params)?;
    let d_h52 = face_gradient(&state.h.map(|v| v * v * v.sqrt()));
    let d_sigma = face_gradient(&state.gamma.map(|v| params.sigma.sigma_unchecked(v)));
    let d_root = face_gradient(&state.gamma.map(f64::sqrt));
    let h = state.h.values();
    let mut weighted = 0.0;
    for k in 1..n {
        weighted += 0.5 * (h[k - 1] + h[k]) * d_sigma[k] * d_sigma[k];
    }
    let g = params.g;
    Ok(Dissipation {
        terms: [
            g * jf.l2_squared(),
            js.l2_squared(),
            g * g / 75.0 * d_h52.l2_squared(),
            0.25 * weighted * grid.dx(),
            8.0 * params.sigma.sigma0() * params.d * d_root.l2_squared(),
        ],
    })
}

/// Exact rate of decay of the discrete Lyapunov functional under the
/// semi-discrete scheme, `-(d/dt) L = sum_k [G dh F_h + d phi'(gamma) F_gamma] dx`.
///
/// `None` when some `gamma` vanishes (`phi'` is unbounded there).
pub fn sharp_dissipation(
    state: &State,
    params: &ModelParams,
    scheme: Scheme,
) -> Result<Option<f64>> {
    if state.gamma.min() <= 0.0 {
        return Ok(None);
    }
    let (fh, fg) = match scheme {
        Scheme::Regularized => {
            let aux = assemble_aux(state, params)?;
            regularized_fluxes(state, &aux, params)?
        }
        Scheme::Original => original_fluxes(state, params)?,
    };
    let dh = face_gradient(&state.h);
    let dphi = face_gradient(&state.gamma.map(|g| params.sigma.phi_prime_unchecked(g)));
    let n = state.grid().n_cells();
    let mut sum = 0.0;
    for k in 1..n {
        sum += params.g * dh[k] * fh[k] + dphi[k] * fg[k];
    }
    Ok(Some(sum * state.grid().dx()))
}

/// `int gamma |ln gamma| dx`, with the integrand `0` at `gamma = 0`.
pub fn entropy_integral(gamma: &Field) -> f64 {
    let dx = gamma.grid().dx();
    gamma
        .values()
        .iter()
        .map(|&g| if g > 0.0 { g * g.ln().abs() } else { 0.0 })
        .sum::<f64>()
        * dx
}

/// Upper bound `(L0(0) + sigma0 |gamma0|_1 + sigma0 L / e) / sigma0` on
/// [`entropy_integral`] along a trajectory starting from `initial`.
pub fn entropy_bound(initial: &State, params: &ModelParams) -> Result<f64> {
    let s0 = params.sigma.sigma0();
    let l0 = lyapunov_limit(initial, params)?;
    let len = initial.grid().length();
    Ok((l0 + s0 * initial.gamma.integral() + s0 * len / std::f64::consts::E) / s0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_h: f64,
    pub mass_gamma: f64,
    pub min_h: f64,
    pub min_gamma: f64,
    /// Regularized quantities; absent for original-scheme runs.
    pub l_reg: Option<f64>,
    pub d_reg: Option<f64>,
    pub d_reg_terms: Option<[f64; 6]>,
    pub cum_d_reg: Option<f64>,
    pub l0: f64,
    pub d0: f64,
    pub d0_terms: [f64; 5],
    pub cum_d0: f64,
    /// Exact semi-discrete decay rate of the scheme's own functional.
    pub d_sharp: Option<f64>,
    pub cum_d_sharp: Option<f64>,
    pub entropy: f64,
}

impl DiagnosticsRecord {
    /// Instantaneous quantities; the cumulative fields are filled by the ledger.
    pub fn compute(state: &State, params: &ModelParams, scheme: Scheme) -> Result<Self> {
        let l0 = lyapunov_limit(state, params)?;
        let d0 = dissipation_limit(state, params)?;
        let (l_reg, d_reg) = match scheme {
            Scheme::Regularized => {
                let aux = assemble_aux(state, params)?;
                (Some(l0), Some(dissipation_reg(state, &aux, params)?))
            }
            Scheme::Original => (None, None),
        };
        Ok(Self {
            t: state.t,
            mass_h: state.mass_h(),
            mass_gamma: state.mass_gamma(),
            min_h: state.h.min(),
            min_gamma: state.gamma.min(),
            l_reg,
            d_reg: d_reg.map(|d| d.total()),
            d_reg_terms: d_reg.map(|d| d.terms),
            cum_d_reg: d_reg.map(|_| 0.0),
            l0,
            d0: d0.total(),
            d0_terms: d0.terms,
            cum_d0: 0.0,
            d_sharp: sharp_dissipation(state, params, scheme)?,
            cum_d_sharp: None,
            entropy: entropy_integral(&state.gamma),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub quantity: String,
    pub slack: f64,
}

/// Time-ordered diagnostics with trapezoid-integrated dissipation.
///
/// Every update is integrated; only the kept ones are stored.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyLedger {
    pub scheme: Scheme,
    pub records: Vec<DiagnosticsRecord>,
    pub violations: Vec<Violation>,
    #[serde(skip)]
    last: Option<DiagnosticsRecord>,
    #[serde(skip)]
    first: Option<DiagnosticsRecord>,
    max_dt: f64,
    max_rate: f64,
}

fn trapezoid(prev: Option<f64>, acc: Option<f64>, now: Option<f64>, dt: f64) -> Option<f64> {
    match (prev, acc, now) {
        (Some(a), Some(c), Some(b)) => Some(c + 0.5 * dt * (a + b)),
        _ => None,
    }
}

impl EnergyLedger {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            records: vec![],
            violations: vec![],
            last: None,
            first: None,
            max_dt: 0.0,
            max_rate: 0.0,
        }
    }

    /// Functional whose decay the ledger certifies.
    fn primary_l(&self, r: &DiagnosticsRecord) -> f64 {
        match self.scheme {
            Scheme::Regularized => r.l_reg.unwrap_or(r.l0),
            Scheme::Original => r.l0,
        }
    }

    pub fn ledger_update(&mut self, mut record: DiagnosticsRecord, keep: bool) -> Result<()> {
        match &self.last {
            None => {
                record.cum_d_reg = record.d_reg.map(|_| 0.0);
                record.cum_d0 = 0.0;
                record.cum_d_sharp = record.d_sharp.map(|_| 0.0);
                self.first = Some(record.clone());
            }
            Some(prev) => {
                let dt = record.t - prev.t;
                if !(dt > 0.0) {
                    return Err(Error::Param(format!(
                        "ledger times must increase: {} after {}",
                        record.t, prev.t
                    )));
                }
                record.cum_d_reg = trapezoid(prev.d_reg, prev.cum_d_reg, record.d_reg, dt);
                record.cum_d0 = prev.cum_d0 + 0.5 * dt * (prev.d0 + record.d0);
                record.cum_d_sharp = trapezoid(prev.d_sharp, prev.cum_d_sharp, record.d_sharp, dt);
                self.max_dt = self.max_dt.max(dt);
                let rate = ((self.primary_l(&record) - self.primary_l(prev)) / dt).abs();
                self.max_rate = self.max_rate.max(rate);
            }
        }
        if keep || self.records.is_empty() {
            self.records.push(record.clone());
        }
        self.last = Some(record);
        Ok(())
    }

    /// Stores the most recent update if it was not kept.
    pub fn keep_last(&mut self) {
        if let Some(last) = &self.last {
            if self.records.last().map(|r| r.t) != Some(last.t) {
                self.records.push(last.clone());
            }
        }
    }

    /// `10 dt max |dL/dt|` over all updates.
    pub fn default_tol(&self) -> f64 {
        10.0 * self.max_dt * self.max_rate
    }

    pub fn ledger_check(&self, tol: Option<f64>) -> LedgerReport {
        let tol = tol.unwrap_or_else(|| self.default_tol());
        let Some(first) = &self.first else {
            return LedgerReport {
                tol,
                rows: vec![],
                violations: vec![],
            };
        };
        let mut rows = Vec::with_capacity(self.records.len());
        let mut violations = vec![];
        for r in &self.records {
            let slack_reg = match (first.l_reg, r.l_reg, r.cum_d_reg) {
                (Some(a), Some(b), Some(c)) => Some(a - b - c),
                _ => None,
            };
            let slack_limit = first.l0 - r.l0 - r.cum_d0;
            let defect = r
                .cum_d_sharp
                .map(|c| self.primary_l(first) - self.primary_l(r) - c);
            let (name, primary) = match self.scheme {
                Scheme::Regularized => ("slack_reg", slack_reg.unwrap_or(f64::NAN)),
                Scheme::Original => ("slack_limit", slack_limit),
            };
            if !(primary >= -tol) {
                violations.push(Violation {
                    t: r.t,
                    quantity: name.into(),
                    slack: primary,
                });
            }
            rows.push(SlackRow {
                t: r.t,
                slack_reg,
                slack_limit,
                defect,
            });
        }
        LedgerReport {
            tol,
            rows,
            violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlackRow {
    pub t: f64,
    pub slack_reg: Option<f64>,
    pub slack_limit: f64,
    /// `L(0) - L(t) - int D_sharp`: the time-discretization defect.
    pub defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerReport {
    pub tol: f64,
    pub rows: Vec<SlackRow>,
    pub violations: Vec<Violation>,
}

impl LedgerReport {
    /// Most negative value of `pick` (or `0` if none is negative).
    pub fn worst(&self, pick: impl Fn(&SlackRow) -> Option<f64>) -> f64 {
        self.rows.iter().filter_map(pick).fold(0.0, f64::min)
    }

    pub fn worst_reg(&self) -> f64 {
        self.worst(|r| r.slack_reg)
    }

    pub fn worst_limit(&self) -> f64 {
        self.worst(|r| Some(r.slack_limit))
    }

    /// Largest `|defect|` over the ledger.
    pub fn max_defect(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.defect)
            .fold(0.0, |m, d| m.max(d.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Barrier and mass checks against reference masses `(mass_h, mass_gamma)`.
///
/// Barrier slack is `min - floor` with `tol_pos` allowance; mass slack is
/// `mass_tol - relative drift`.
pub fn bounds_check(
    state: &State,
    params: &ModelParams,
    scheme: Scheme,
    reference: (f64, f64),
    mass_tol: f64,
) -> BoundsReport {
    let (h_floor, g_floor) = match scheme {
        Scheme::Regularized => (params.sqrt_eps(), params.eps),
        Scheme::Original => (0.0, 0.0),
    };
    let barrier = |name, min: f64, floor: f64| {
        let slack = min - floor;
        BoundCheck {
            name,
            slack,
            holds: slack >= -TOL_POS,
        }
    };
    let mass = |name, now: f64, then: f64| {
        let slack = mass_tol - ((now - then) / then.abs().max(f64::MIN_POSITIVE)).abs();
        BoundCheck {
            name,
            slack,
            holds: slack >= 0.0,
        }
    };
    BoundsReport {
        checks: vec![
            barrier("barrier_h", state.h.min(), h_floor),
            barrier("barrier_gamma", state.gamma.min(), g_floor),
            mass("mass_h", state.mass_h(), reference.0),
            mass("mass_gamma", state.mass_gamma(), reference.1),
        ],
    }
}

/// Discrete surrogates of the ε-uniform bounds, sampled at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorSample {
    pub t: f64,
    pub h_l2: f64,
    pub entropy: f64,
    pub jf_l2sq: f64,
    pub js_l2sq: f64,
    /// `|h^{5/2}|_{W^1_2}^2`
    pub h52_w12sq: f64,
    /// `|h|_inf^5`
    pub h_inf5: f64,
    /// `max_{i != j} |h_i - h_j| / |x_i - x_j|^{1/5}`
    pub holder: f64,
}

impl MonitorSample {
    pub fn of(state: &State, params: &ModelParams) -> Result<Self> {
        let (jf, js) = fluxes_j_limit(state, params)?;
        let h52 = state.h.map(|v| v * v * v.sqrt());
        let h = state.h.values();
        let dx = state.grid().dx();
        let mut holder: f64 = 0.0;
        for i in 0..h.len() {
            for j in i + 1..h.len() {
                let dist = (j - i) as f64 * dx;
                holder = holder.max((h[i] - h[j]).abs() / dist.powf(0.2));
            }
        }
        Ok(Self {
            t: state.t,
            h_l2: discrete_norm(&state.h, Norm::L2),
            entropy: entropy_integral(&state.gamma),
            jf_l2sq: jf.l2_squared(),
            js_l2sq: js.l2_squared(),
            h52_w12sq: discrete_norm(&h52, Norm::L2).powi(2) + face_gradient(&h52).l2_squared(),
            h_inf5: discrete_norm(&state.h, Norm::Linf).powi(5),
            holder,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub samples: Vec<MonitorSample>,
    pub sup_h_l2: f64,
    pub sup_entropy: f64,
    /// `int_0^T |j_f|^2 dt` and `int_0^T |j_s|^2 dt` (trapezoid).
    pub flux_budget_f: f64,
    pub flux_budget_s: f64,
    /// `int_0^T (|h^{5/2}|_{W^1_2}^2 + |h|_inf^5) dt`
    pub regularity_budget: f64,
    pub sup_holder: f64,
}

/// Reports the monitored quantities along a (subsampled) trajectory.
pub fn uniform_estimates_monitor(
    trajectory: &[State],
    params: &ModelParams,
) -> Result<MonitorReport> {
    let samples = trajectory
        .iter()
        .map(|s| MonitorSample::of(s, params))
        .collect::<Result<Vec<_>>>()?;
    let integral = |f: &dyn Fn(&MonitorSample) -> f64| {
        crate::grid::time_integral(&samples.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>())
    };
    let sup = |f: &dyn Fn(&MonitorSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    Ok(MonitorReport {
        sup_h_l2: sup(&|s| s.h_l2),
        sup_entropy: sup(&|s| s.entropy),
        flux_budget_f: integral(&|s| s.jf_l2sq),
        flux_budget_s: integral(&|s| s.js_l2sq),
        regularity_budget: integral(&|s| s.h52_w12sq + s.h_inf5),
        sup_holder: sup(&|s| s.holder),
        samples,
    })
}

/// Observer that feeds every accepted state into an [`EnergyLedger`] and
/// checks barriers and the entropy bound.
pub struct LedgerObserver {
    pub params: ModelParams,
    pub ledger: EnergyLedger,
    /// Store every `cadence`-th update (landmarks are always stored).
    pub cadence: usize,
    pub mass_tol: f64,
    reference: Option<(f64, f64)>,
    entropy_bound: Option<f64>,
    count: usize,
}

impl LedgerObserver {
    pub fn new(params: ModelParams, scheme: Scheme, cadence: usize) -> Self {
        Self {
            params,
            ledger: EnergyLedger::new(scheme),
            cadence: cadence.max(1),
            mass_tol: 1e-12,
            reference: None,
            entropy_bound: None,
            count: 0,
        }
    }

    pub fn entropy_bound(&self) -> Option<f64> {
        self.entropy_bound
    }

    fn flag(&mut self, t: f64, quantity: &str, slack: f64) {
        self.ledger.violations.push(Violation {
            t,
            quantity: quantity.into(),
            slack,
        });
    }
}

impl Observer for LedgerObserver {
    fn observe(&mut self, state: &State, landmark: bool) -> Result<()> {
        let scheme = self.ledger.scheme;
        if self.reference.is_none() {
            self.reference = Some((state.mass_h(), state.mass_gamma()));
            if scheme == Scheme::Regularized {
                self.entropy_bound = Some(entropy_bound(state, &self.params)?);
            }
        }
        let record = DiagnosticsRecord::compute(state, &self.params, scheme)?;
        let bounds = bounds_check(
            state,
            &self.params,
            scheme,
            self.reference.unwrap(),
            self.mass_tol,
        );
        for c in bounds.checks.iter().filter(|c| !c.holds) {
            self.flag(state.t, c.name, c.slack);
        }
        if let Some(bound) = self.entropy_bound {
            let slack = bound + 1e-8 - record.entropy;
            if slack < 0.0 {
                self.flag(state.t, "entropy", slack);
            }
        }
        let keep = landmark || self.count.is_multiple_of(self.cadence);
        self.count += 1;
        self.ledger.ledger_update(record, keep)
    }
}
