//! Flux assembly and time stepping for the original and regularized systems.
//!
//! Every flux is built face by face: nonlinear prefactors are evaluated at the
//! arithmetic mean of the two adjacent cell states, gradients are difference
//! quotients, and boundary faces carry exactly zero flux. The time integrator
//! is a first-order IMEX step: the diagonal diffusion of each unknown is
//! implicit with coefficients frozen at the old state, the cross terms are
//! explicit. Steps that breach a positivity floor are rejected, never clipped.

use serde::Serialize;

use crate::constitutive::{a2, b2, ModelParams};
use crate::error::{Error, Result};
use crate::grid::{face_gradient, flux_divergence, FaceField, Field, Grid};
use crate::helmholtz::{smooth, surface_pressure, TridiagonalSystem};

/// Slack allowed below the barriers `sqrt(eps)` and `eps`.
pub const TOL_POS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Regularized,
    Original,
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    /// Film height.
    pub h: Field,
    /// Surfactant concentration.
    pub gamma: Field,
}

impl State {
    pub fn new(t: f64, h: Field, gamma: Field) -> Result<Self> {
        if h.grid() != gamma.grid() {
            return Err(Error::Grid("h and gamma live on different grids".into()));
        }
        if !(h.all_finite() && gamma.all_finite() && t.is_finite()) {
            return Err(Error::NonFinite {
                what: "state",
                index: 0,
            });
        }
        Ok(Self { t, h, gamma })
    }

    /// Lifts unregularized data to `(h0 + sqrt(eps), gamma0 + eps)`.
    pub fn lifted(t: f64, h0: &Field, gamma0: &Field, eps: f64) -> Result<Self> {
        let se = eps.sqrt();
        Self::new(t, h0.map(|v| v + se), gamma0.map(|v| v + eps))
    }

    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    pub fn mass_h(&self) -> f64 {
        self.h.integral()
    }

    pub fn mass_gamma(&self) -> f64 {
        self.gamma.integral()
    }

    /// Checks the floors and admissible range required by `scheme`.
    pub fn check_admissible(&self, params: &ModelParams, scheme: Scheme) -> Result<()> {
        let (h_floor, g_floor) = floors(params, scheme);
        let (hmin, gmin) = (self.h.min(), self.gamma.min());
        if hmin < h_floor || gmin < g_floor {
            return Err(Error::Barrier(format!(
                "min h = {hmin} (floor {h_floor}), min gamma = {gmin} (floor {g_floor})"
            )));
        }
        let gmax = self.gamma.max();
        if gmax > params.sigma.gamma_max() {
            return Err(Error::Domain {
                model: "surface tension",
                value: gmax,
                max: params.sigma.gamma_max(),
            });
        }
        Ok(())
    }
}

fn floors(params: &ModelParams, scheme: Scheme) -> (f64, f64) {
    match scheme {
        Scheme::Regularized => (params.sqrt_eps() - TOL_POS, params.eps - TOL_POS),
        Scheme::Original => (0.0, 0.0),
    }
}

/// Smoothed companions of a regularized state.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxFields {
    /// Smoothed height.
    pub h_smooth: Field,
    /// Smoothed `alpha1(h)`.
    pub alpha1_smooth: Field,
    /// Smoothed concentration.
    pub gamma_smooth: Field,
    /// Screened surface pressure.
    pub pressure: Field,
}

pub fn assemble_aux(state: &State, params: &ModelParams) -> Result<AuxFields> {
    let eps = params.eps;
    for &g in state.gamma.values() {
        params.sigma.check(g)?;
    }
    let h_smooth = smooth(&state.h, eps)?;
    let alpha1_smooth = smooth(&state.h.map(|v| params.alpha1(v)), eps)?;
    let gamma_smooth = smooth(&state.gamma, eps)?;
    let sigma_gamma = state.gamma.map(|g| params.sigma.sigma_unchecked(g));
    let pressure = surface_pressure(&sigma_gamma, &h_smooth, eps)?;
    Ok(AuxFields {
        h_smooth,
        alpha1_smooth,
        gamma_smooth,
        pressure,
    })
}

/// Everything the regularized flux needs at one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizedFace {
    pub h: f64,
    pub gamma: f64,
    pub h_smooth: f64,
    pub gamma_smooth: f64,
    pub dh: f64,
    pub dgamma: f64,
    pub dalpha1_smooth: f64,
    pub dpressure: f64,
}

/// Everything the original flux needs at one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OriginalFace {
    pub h: f64,
    pub gamma: f64,
    pub dh: f64,
    pub dgamma: f64,
}

/// A face flux split as `diag * d(u) + cross`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FluxParts {
    pub h_diag: f64,
    pub h_cross: f64,
    pub g_diag: f64,
    pub g_cross: f64,
}

impl FluxParts {
    pub fn h_flux(&self, dh: f64) -> f64 {
        self.h_diag * dh + self.h_cross
    }

    pub fn g_flux(&self, dgamma: f64) -> f64 {
        self.g_diag * dgamma + self.g_cross
    }
}

/// Regularized flux at one face with regularization `(sqrt_eps, eps)`.
///
/// Passing `sqrt_eps = eps = 0` evaluates the formal limit of the mobilities.
pub fn regularized_face_flux(
    p: &ModelParams,
    sqrt_eps: f64,
    eps: f64,
    f: &RegularizedFace,
) -> FluxParts {
    let a1 = p.a1(f.h);
    let a2 = a2(f.h, sqrt_eps);
    let b2 = b2(f.gamma, eps);
    let alpha0 = p.alpha0(f.h, f.h_smooth);
    let sp = p.sigma.sigma_prime_unchecked(f.gamma);
    let ratio =
        p.sigma.beta1_prime_unchecked(f.gamma) / p.sigma.beta1_prime_unchecked(f.gamma_smooth);
    FluxParts {
        h_diag: a1,
        h_cross: -a2 * f.h_smooth.sqrt() / f.h.sqrt() * f.dpressure,
        g_diag: p.d * ratio - alpha0 * f.gamma * sp,
        g_cross: p.g * a2 * b2 * alpha0.sqrt() / (f.h * a1).sqrt() * f.dalpha1_smooth,
    }
}

/// Original (degenerate) flux at one face.
pub fn original_face_flux(p: &ModelParams, f: &OriginalFace) -> FluxParts {
    let sp = p.sigma.sigma_prime_unchecked(f.gamma);
    FluxParts {
        h_diag: p.a1(f.h),
        h_cross: -0.5 * f.h * f.h * sp * f.dgamma,
        g_diag: p.d - f.h * f.gamma * sp,
        g_cross: 0.5 * p.g * f.h * f.h * f.gamma * f.dh,
    }
}

fn mean(v: &[f64], k: usize) -> f64 {
    0.5 * (v[k - 1] + v[k])
}

/// Split face fluxes over the whole grid, boundary entries zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitFluxes {
    pub parts: Vec<FluxParts>,
    pub dh: FaceField,
    pub dgamma: FaceField,
}

impl SplitFluxes {
    fn assemble(&self, pick: impl Fn(&FluxParts, f64, f64) -> f64) -> FaceField {
        let grid = *self.dh.grid();
        let mut out = FaceField::zeros(grid);
        let n = grid.n_cells();
        for k in 1..n {
            out.values_mut()[k] = pick(&self.parts[k], self.dh[k], self.dgamma[k]);
        }
        out
    }

    pub fn h_flux(&self) -> FaceField {
        self.assemble(|p, dh, _| p.h_flux(dh))
    }

    pub fn g_flux(&self) -> FaceField {
        self.assemble(|p, _, dg| p.g_flux(dg))
    }
}

fn regularized_faces(
    state: &State,
    aux: &AuxFields,
    params: &ModelParams,
) -> Result<Vec<Option<RegularizedFace>>> {
    let grid = *state.grid();
    let n = grid.n_cells();
    let (h, g) = (state.h.values(), state.gamma.values());
    let (hs, bs) = (aux.h_smooth.values(), aux.gamma_smooth.values());
    let dh = face_gradient(&state.h);
    let dg = face_gradient(&state.gamma);
    let da = face_gradient(&aux.alpha1_smooth);
    let dp = face_gradient(&aux.pressure);
    let h_guard = 0.5 * params.sqrt_eps();
    let b_guard = 0.5 * params.sigma.sigma0() * params.eps;
    let mut faces = vec![None; n + 1];
    for k in 1..n {
        let face = RegularizedFace {
            h: mean(h, k),
            gamma: mean(g, k),
            h_smooth: mean(hs, k),
            gamma_smooth: mean(bs, k),
            dh: dh[k],
            dgamma: dg[k],
            dalpha1_smooth: da[k],
            dpressure: dp[k],
        };
        if !(face.h >= h_guard) {
            return Err(Error::Barrier(format!(
                "face height {} below sqrt(eps)/2 at face {k}",
                face.h
            )));
        }
        let b1p = params.sigma.beta1_prime_unchecked(face.gamma_smooth);
        if !(b1p >= b_guard) {
            return Err(Error::Barrier(format!(
                "beta1'(B) = {b1p} below sigma0 eps / 2 at face {k}"
            )));
        }
        faces[k] = Some(face);
    }
    Ok(faces)
}

pub fn regularized_split(
    state: &State,
    aux: &AuxFields,
    params: &ModelParams,
) -> Result<SplitFluxes> {
    let faces = regularized_faces(state, aux, params)?;
    let (se, eps) = (params.sqrt_eps(), params.eps);
    let parts = faces
        .iter()
        .map(|f| {
            f.map(|f| regularized_face_flux(params, se, eps, &f))
                .unwrap_or_default()
        })
        .collect();
    Ok(SplitFluxes {
        parts,
        dh: face_gradient(&state.h),
        dgamma: face_gradient(&state.gamma),
    })
}

pub fn original_split(state: &State, params: &ModelParams) -> Result<SplitFluxes> {
    for &g in state.gamma.values() {
        params.sigma.check(g)?;
    }
    let n = state.grid().n_cells();
    let (h, g) = (state.h.values(), state.gamma.values());
    let dh = face_gradient(&state.h);
    let dgamma = face_gradient(&state.gamma);
    let mut parts = vec![FluxParts::default(); n + 1];
    for k in 1..n {
        parts[k] = original_face_flux(
            params,
            &OriginalFace {
                h: mean(h, k),
                gamma: mean(g, k),
                dh: dh[k],
                dgamma: dgamma[k],
            },
        );
    }
    Ok(SplitFluxes { parts, dh, dgamma })
}

/// Face fluxes `(F_h, F_gamma)` of the regularized system.
pub fn regularized_fluxes(
    state: &State,
    aux: &AuxFields,
    params: &ModelParams,
) -> Result<(FaceField, FaceField)> {
    let s = regularized_split(state, aux, params)?;
    Ok((s.h_flux(), s.g_flux()))
}

/// Face fluxes `(F_h, F_gamma)` of the original system.
pub fn original_fluxes(state: &State, params: &ModelParams) -> Result<(FaceField, FaceField)> {
    let s = original_split(state, params)?;
    Ok((s.h_flux(), s.g_flux()))
}

/// Dissipation fluxes `(J_f, J_s)` of the regularized system.
///
/// With these face conventions the height flux equals `-sqrt(a1(h)) J_f`
/// and the concentration flux equals
/// `-(D gamma / beta1'(B)) d sigma(gamma) - sqrt(alpha0) gamma J_s`.
pub fn fluxes_j(
    state: &State,
    aux: &AuxFields,
    params: &ModelParams,
) -> Result<(FaceField, FaceField)> {
    let faces = regularized_faces(state, aux, params)?;
    let grid = *state.grid();
    let mut jf = FaceField::zeros(grid);
    let mut js = FaceField::zeros(grid);
    let (se, eps) = (params.sqrt_eps(), params.eps);
    for (k, face) in faces.iter().enumerate() {
        let Some(f) = face else { continue };
        let a1 = params.a1(f.h);
        let a2 = a2(f.h, se);
        let root = (f.h * a1).sqrt();
        let dsigma = params.sigma.sigma_prime_unchecked(f.gamma) * f.dgamma;
        jf.values_mut()[k] = -a1.sqrt() * f.dh + a2 * f.h_smooth.sqrt() / root * f.dpressure;
        js.values_mut()[k] = params.alpha0(f.h, f.h_smooth).sqrt() * dsigma
            - params.g * a2 / root * b2(f.gamma, eps) / f.gamma * f.dalpha1_smooth;
    }
    Ok((jf, js))
}

/// Fluxes `(j_f, j_s)` of the weak formulation of the original system,
/// built from face gradients of `h^{5/2}` and `sigma(gamma)`.
pub fn fluxes_j_limit(state: &State, params: &ModelParams) -> Result<(FaceField, FaceField)> {
    for &g in state.gamma.values() {
        params.sigma.check(g)?;
    }
    let grid = *state.grid();
    let n = grid.n_cells();
    let g = params.g;
    let d_h52 = face_gradient(&state.h.map(|v| v * v * v.sqrt()));
    let d_sigma = face_gradient(&state.gamma.map(|v| params.sigma.sigma_unchecked(v)));
    let h = state.h.values();
    let mut jf = FaceField::zeros(grid);
    let mut js = FaceField::zeros(grid);
    for k in 1..n {
        let hf = mean(h, k);
        jf.values_mut()[k] =
            -0.4 * (g / 3.0).sqrt() * d_h52[k] + (3.0 * hf / (4.0 * g)).sqrt() * d_sigma[k];
        js.values_mut()[k] = -g / 5.0 * d_h52[k] + hf.sqrt() * d_sigma[k];
    }
    Ok((jf, js))
}

/// Right-hand sides added to the two equations (manufactured solutions).
pub trait Source: Sync {
    /// Rates `(s_h, s_gamma)` at time `t` and position `x`.
    fn rates(&self, t: f64, x: f64) -> (f64, f64);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepControl {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Consecutive accepted steps before `dt` grows.
    pub grow_after: usize,
    /// Rejections tolerated in a row before giving up.
    pub max_rejects: usize,
    #[serde(skip)]
    streak: usize,
    #[serde(skip)]
    rejects: usize,
}

impl StepControl {
    pub fn new(dt: f64, dt_min: f64, dt_max: f64) -> Result<Self> {
        let c = Self {
            dt,
            dt_min,
            dt_max,
            shrink: 0.5,
            grow: 1.2,
            grow_after: 5,
            max_rejects: 60,
            streak: 0,
            rejects: 0,
        };
        c.validate()?;
        Ok(c)
    }

    /// `dt0 = dx^2`, `dt_max = factor dx^2`, `dt_min = 1e-12`.
    pub fn for_grid(grid: &Grid, dt_max_factor: f64) -> Result<Self> {
        let dx2 = grid.dx() * grid.dx();
        Self::new(dx2.min(dt_max_factor * dx2), 1e-12, dt_max_factor * dx2)
    }

    /// Constant step size, no adaptation.
    pub fn fixed(dt: f64) -> Result<Self> {
        let mut c = Self::new(dt, dt, dt)?;
        c.max_rejects = 0;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0
            && self.dt_min <= self.dt
            && self.dt <= self.dt_max
            && self.dt_max.is_finite())
        {
            return Err(Error::Param(format!(
                "need 0 < dt_min <= dt <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt, self.dt_max
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.grow >= 1.0) {
            return Err(Error::Param("need shrink in (0, 1) and grow >= 1".into()));
        }
        Ok(())
    }

    fn accept(&mut self) {
        self.rejects = 0;
        self.streak += 1;
        if self.streak >= self.grow_after {
            self.streak = 0;
            self.dt = (self.dt * self.grow).min(self.dt_max);
        }
    }

    /// Shrinks `dt`; `false` once the rejection budget or `dt_min` is exhausted.
    fn reject(&mut self) -> bool {
        self.streak = 0;
        self.rejects += 1;
        if self.rejects > self.max_rejects {
            return false;
        }
        let next = self.dt * self.shrink;
        if next < self.dt_min {
            return false;
        }
        self.dt = next;
        true
    }
}

fn implicit_solve(
    u: &Field,
    diag: impl Fn(&FluxParts) -> f64,
    cross: impl Fn(&FluxParts) -> f64,
    split: &SplitFluxes,
    dt: f64,
    source: Option<Vec<f64>>,
) -> Result<Field> {
    let grid = *u.grid();
    let n = grid.n_cells();
    let dx2 = grid.dx() * grid.dx();
    let mut weights = vec![0.0; n + 1];
    let mut cross_flux = FaceField::zeros(grid);
    for k in 1..n {
        weights[k] = dt * diag(&split.parts[k]) / dx2;
        cross_flux.values_mut()[k] = cross(&split.parts[k]);
    }
    let div = flux_divergence(&cross_flux)?;
    let mut rhs: Vec<f64> = u
        .values()
        .iter()
        .zip(div.values())
        .map(|(v, d)| v + dt * d)
        .collect();
    if let Some(s) = source {
        for (r, s) in rhs.iter_mut().zip(s) {
            *r += dt * s;
        }
    }
    let x = TridiagonalSystem::neumann(&weights).solve(&rhs)?;
    Ok(Field::from_vec_unchecked(grid, x))
}

fn split_for(state: &State, params: &ModelParams, scheme: Scheme) -> Result<SplitFluxes> {
    match scheme {
        Scheme::Regularized => {
            let aux = assemble_aux(state, params)?;
            regularized_split(state, &aux, params)
        }
        Scheme::Original => original_split(state, params),
    }
}

/// Why an attempted step was refused.
#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    Floor { min_h: f64, min_gamma: f64 },
    NonFinite,
    Barrier(String),
    Range(f64),
}

/// One IMEX attempt of size `dt`; `Err(Rejection)` when the result is not admissible.
pub fn try_step(
    state: &State,
    params: &ModelParams,
    dt: f64,
    scheme: Scheme,
    source: Option<&dyn Source>,
) -> Result<std::result::Result<State, Rejection>> {
    let split = match split_for(state, params, scheme) {
        Ok(s) => s,
        Err(Error::Barrier(msg)) => return Ok(Err(Rejection::Barrier(msg))),
        Err(e) => return Err(e),
    };
    let grid = *state.grid();
    let (sh, sg) = match source {
        Some(src) => {
            let (a, b): (Vec<f64>, Vec<f64>) = grid
                .centers()
                .into_iter()
                .map(|x| src.rates(state.t, x))
                .unzip();
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    let solved =
        implicit_solve(&state.h, |p| p.h_diag, |p| p.h_cross, &split, dt, sh).and_then(|h| {
            implicit_solve(&state.gamma, |p| p.g_diag, |p| p.g_cross, &split, dt, sg)
                .map(|g| (h, g))
        });
    let (h, gamma) = match solved {
        Ok(v) => v,
        Err(Error::NonFinite { .. }) => return Ok(Err(Rejection::NonFinite)),
        Err(e) => return Err(e),
    };
    if !(h.all_finite() && gamma.all_finite()) {
        return Ok(Err(Rejection::NonFinite));
    }
    let (h_floor, g_floor) = floors(params, scheme);
    let (min_h, min_gamma) = (h.min(), gamma.min());
    if min_h < h_floor || min_gamma < g_floor {
        return Ok(Err(Rejection::Floor { min_h, min_gamma }));
    }
    if gamma.max() > params.sigma.gamma_max() {
        return Ok(Err(Rejection::Range(gamma.max())));
    }
    Ok(Ok(State {
        t: state.t + dt,
        h,
        gamma,
    }))
}

/// One step at `control.dt`. Returns the new state and `true`, or the old
/// state and `false` if the step was rejected (the caller shrinks `dt`).
pub fn step(
    state: &State,
    params: &ModelParams,
    control: &StepControl,
    scheme: Scheme,
) -> Result<(State, bool)> {
    match try_step(state, params, control.dt, scheme, None)? {
        Ok(next) => Ok((next, true)),
        Err(_) => Ok((state.clone(), false)),
    }
}

/// Fully explicit Euler step, the consistency reference for [`step`].
pub fn explicit_step(
    state: &State,
    params: &ModelParams,
    dt: f64,
    scheme: Scheme,
) -> Result<State> {
    let split = split_for(state, params, scheme)?;
    let dh = flux_divergence(&split.h_flux())?;
    let dg = flux_divergence(&split.g_flux())?;
    let grid = *state.grid();
    let add = |u: &Field, d: &Field| {
        Field::from_vec_unchecked(
            grid,
            u.values()
                .iter()
                .zip(d.values())
                .map(|(a, b)| a + dt * b)
                .collect(),
        )
    };
    Ok(State {
        t: state.t + dt,
        h: add(&state.h, &dh),
        gamma: add(&state.gamma, &dg),
    })
}

/// Receives the initial state and every accepted state of a run.
pub trait Observer {
    /// `landmark` is set when `state.t` hits a requested output time exactly.
    fn observe(&mut self, state: &State, landmark: bool) -> Result<()>;
}

impl<F: FnMut(&State, bool) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &State, landmark: bool) -> Result<()> {
        self(state, landmark)
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &State, _: bool) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub t_end: f64,
    pub scheme: Scheme,
    /// Times the integrator lands on exactly (snapshots, sweep samples).
    pub landmarks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub dt_smallest: f64,
    pub dt_largest: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_state: State,
    pub stats: RunStats,
}

pub fn run(
    initial: &State,
    params: &ModelParams,
    control: &StepControl,
    options: &RunOptions,
    observer: &mut dyn Observer,
) -> Result<RunSummary> {
    run_with_source(initial, params, control, options, None, observer)
}

pub fn run_with_source(
    initial: &State,
    params: &ModelParams,
    control: &StepControl,
    options: &RunOptions,
    source: Option<&dyn Source>,
    observer: &mut dyn Observer,
) -> Result<RunSummary> {
    control.validate()?;
    initial.check_admissible(params, options.scheme)?;
    let mut control = *control;
    let mut marks: Vec<f64> = options
        .landmarks
        .iter()
        .copied()
        .filter(|&t| t > initial.t && t < options.t_end)
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    marks.push(options.t_end);
    let mut marks = marks.into_iter().peekable();

    let mut state = initial.clone();
    let mut stats = RunStats {
        accepted: 0,
        rejected: 0,
        dt_smallest: f64::INFINITY,
        dt_largest: 0.0,
    };
    observer.observe(&state, options.landmarks.contains(&state.t))?;

    // relative slack for merging a sliver step into the landmark
    let merge = 1e-9;
    while let Some(&target) = marks.peek() {
        if state.t >= target {
            marks.next();
            continue;
        }
        let remaining = target - state.t;
        let (dt, lands) = if control.dt >= remaining * (1.0 - merge) {
            (remaining, true)
        } else {
            (control.dt, false)
        };
        match try_step(&state, params, dt, options.scheme, source)? {
            Ok(mut next) => {
                if lands {
                    next.t = target;
                    marks.next();
                }
                stats.accepted += 1;
                stats.dt_smallest = stats.dt_smallest.min(dt);
                stats.dt_largest = stats.dt_largest.max(dt);
                state = next;
                if !lands || dt >= control.dt {
                    control.accept();
                }
                observer.observe(&state, lands)?;
            }
            Err(reason) => {
                stats.rejected += 1;
                log::debug!("t = {}: rejected dt = {dt}: {reason:?}", state.t);
                if lands && dt < control.dt {
                    control.dt = dt;
                }
                if !control.reject() {
                    return Err(Error::StepFailure {
                        t: state.t,
                        dt: control.dt,
                        rejects: stats.rejected,
                        last_good: Box::new(state),
                    });
                }
            }
        }
    }
    Ok(RunSummary {
        final_state: state,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{SigmaModel, DEFAULT_ETA1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(eps: f64) -> ModelParams {
        ModelParams::new(
            1.0,
            0.1,
            SigmaModel::linear(2.0, 1.0).unwrap(),
            eps,
            DEFAULT_ETA1,
        )
        .unwrap()
    }

    fn cosine_state(grid: Grid, eps: f64) -> State {
        let h0 = Field::from_fn(grid, |x| 1.0 + 0.5 * (PI * x).cos());
        let g0 = Field::from_fn(grid, |x| 0.5 - 0.4 * (2.0 * PI * x).cos());
        State::lifted(0.0, &h0, &g0, eps).unwrap()
    }

    fn constant_state(grid: Grid, h: f64, g: f64) -> State {
        State::new(0.0, Field::constant(grid, h), Field::constant(grid, g)).unwrap()
    }

    fn random_state(grid: Grid, rng: &mut ChaCha8Rng, eps: f64) -> State {
        let h = (0..grid.n_cells())
            .map(|_| rng.gen_range(eps.sqrt()..3.0))
            .collect();
        let g = (0..grid.n_cells())
            .map(|_| rng.gen_range(eps..2.0))
            .collect();
        State::new(
            0.0,
            Field::new(grid, h).unwrap(),
            Field::new(grid, g).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn aux_of_constant_state() {
        let g = Grid::new(16, 1.0).unwrap();
        let p = params(0.05);
        let s = constant_state(g, 1.3, 0.7);
        let aux = assemble_aux(&s, &p).unwrap();
        for i in 0..16 {
            assert!((aux.h_smooth[i] - 1.3).abs() < 1e-14);
            assert!((aux.alpha1_smooth[i] - p.alpha1(1.3)).abs() < 1e-14);
            assert!((aux.gamma_smooth[i] - 0.7).abs() < 1e-14);
            assert!((aux.pressure[i] - p.sigma.sigma(0.7).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn aux_of_lifted_data_respects_barriers() {
        let g = Grid::new(64, 1.0).unwrap();
        let p = params(0.01);
        let h0 = Field::from_fn(g, |x| (1.0 + (PI * x).cos()).powi(2));
        let g0 = Field::from_fn(g, |x| 1.0 - (PI * x).cos());
        let s = State::lifted(0.0, &h0, &g0, 0.01).unwrap();
        let aux = assemble_aux(&s, &p).unwrap();
        assert!(aux.h_smooth.min() >= 0.1 - 1e-15);
        assert!(aux.gamma_smooth.min() >= 0.01 - 1e-15);
    }

    #[test]
    fn constant_state_has_zero_flux() {
        let g = Grid::new(16, 1.0).unwrap();
        let p = params(0.05);
        let s = constant_state(g, 1.3, 0.7);
        let aux = assemble_aux(&s, &p).unwrap();
        for (fh, fg) in [
            regularized_fluxes(&s, &aux, &p).unwrap(),
            original_fluxes(&s, &p).unwrap(),
        ] {
            assert!(fh.max_abs() < 1e-14 && fg.max_abs() < 1e-14);
        }
        let (jf, js) = fluxes_j(&s, &aux, &p).unwrap();
        assert!(jf.max_abs() < 1e-14 && js.max_abs() < 1e-14);
        let (jf, js) = fluxes_j_limit(&s, &p).unwrap();
        assert!(jf.max_abs() < 1e-14 && js.max_abs() < 1e-14);
    }

    #[test]
    fn gamma_diffusivity_is_positive() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let s = random_state(g, &mut rng, 0.01);
            let aux = assemble_aux(&s, &p).unwrap();
            let split = regularized_split(&s, &aux, &p).unwrap();
            for k in 1..32 {
                assert!(split.parts[k].g_diag > 0.0);
            }
        }
    }

    #[test]
    fn cosine_height_constant_gamma_flux_is_pure_cross_term() {
        let g = Grid::new(40, 1.0).unwrap();
        let p = params(0.01);
        let h = Field::from_fn(g, |x| 1.0 + 0.3 * (PI * x).cos());
        let s = State::new(0.0, h, Field::constant(g, 0.6)).unwrap();
        let aux = assemble_aux(&s, &p).unwrap();
        let (_, fg) = regularized_fluxes(&s, &aux, &p).unwrap();
        let (hv, hs, av) = (
            s.h.values(),
            aux.h_smooth.values(),
            aux.alpha1_smooth.values(),
        );
        let dx = g.dx();
        for k in 1..40 {
            let hf = 0.5 * (hv[k - 1] + hv[k]);
            let hsf = 0.5 * (hs[k - 1] + hs[k]);
            let a1 = p.g * hf.powi(3) / 3.0;
            let a2 = (hf - 0.1f64).powi(2) / 2.0;
            let b2 = 0.6 - 0.01;
            let alpha0 = DEFAULT_ETA1 * hsf + (1.0 - DEFAULT_ETA1) * hf;
            let oracle =
                p.g * a2 * b2 * alpha0.sqrt() / (hf * a1).sqrt() * (av[k] - av[k - 1]) / dx;
            assert!((fg[k] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn original_flux_degenerates_at_zero_height() {
        let g = Grid::new(20, 1.0).unwrap();
        let p = params(0.01);
        let gam = Field::from_fn(g, |x| 1.0 + 0.5 * (PI * x).cos());
        let s = State::new(0.0, Field::constant(g, 0.0), gam).unwrap();
        let (fh, fg) = original_fluxes(&s, &p).unwrap();
        let dg = face_gradient(&s.gamma);
        for k in 0..=20 {
            assert_eq!(fh[k], 0.0);
            assert!((fg[k] - 0.1 * dg[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn original_flux_matches_formula() {
        let g = Grid::new(30, 2.0).unwrap();
        let sigma = SigmaModel::logarithmic(2.0, 0.5, 1.0, crate::constitutive::LogSign::Plus, 5.0)
            .unwrap();
        let p = ModelParams::new(1.4, 0.2, sigma, 0.01, DEFAULT_ETA1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = random_state(g, &mut rng, 0.01);
        let (fh, fg) = original_fluxes(&s, &p).unwrap();
        let (h, gm) = (s.h.values(), s.gamma.values());
        let dx = g.dx();
        for k in 1..30 {
            let (hf, gf) = ((h[k] + h[k - 1]) / 2.0, (gm[k] + gm[k - 1]) / 2.0);
            let (dh, dg) = ((h[k] - h[k - 1]) / dx, (gm[k] - gm[k - 1]) / dx);
            let sp = -0.5 / (1.0 + gf);
            let oh = 1.4 * hf.powi(3) / 3.0 * dh - hf * hf / 2.0 * sp * dg;
            let og = 1.4 * hf * hf / 2.0 * gf * dh + (0.2 - hf * gf * sp) * dg;
            assert!((fh[k] - oh).abs() < 1e-12 && (fg[k] - og).abs() < 1e-12);
        }
    }

    #[test]
    fn height_flux_is_minus_root_a1_times_jf() {
        let g = Grid::new(50, 1.0).unwrap();
        let p = params(0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10 {
            let s = random_state(g, &mut rng, 0.02);
            let aux = assemble_aux(&s, &p).unwrap();
            let (fh, fg) = regularized_fluxes(&s, &aux, &p).unwrap();
            let (jf, js) = fluxes_j(&s, &aux, &p).unwrap();
            let (h, gm, bs, hs) = (
                s.h.values(),
                s.gamma.values(),
                aux.gamma_smooth.values(),
                aux.h_smooth.values(),
            );
            for k in 1..50 {
                let hf = (h[k] + h[k - 1]) / 2.0;
                let gf = (gm[k] + gm[k - 1]) / 2.0;
                let bf = (bs[k] + bs[k - 1]) / 2.0;
                let hsf = (hs[k] + hs[k - 1]) / 2.0;
                let scale = fh[k].abs().max(1.0);
                assert!((fh[k] + p.a1(hf).sqrt() * jf[k]).abs() < 1e-12 * scale);
                // concentration flux in dissipation form
                let dsig = -(gm[k] - gm[k - 1]) / g.dx(); // sigma' = -1
                let alt = -(p.d * gf / bf) * dsig - p.alpha0(hf, hsf).sqrt() * gf * js[k];
                assert!((fg[k] - alt).abs() < 1e-12 * fg[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn formal_limit_of_regularized_flux_is_original_flux() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let sigma = SigmaModel::logarithmic(2.0, 0.5, 1.0, crate::constitutive::LogSign::Plus, 5.0)
            .unwrap();
        for p in [
            params(0.01),
            ModelParams::new(2.5, 0.3, sigma, 0.01, 0.8).unwrap(),
        ] {
            for _ in 0..1000 {
                let h = rng.gen_range(0.01..4.0);
                let gamma = rng.gen_range(0.01..4.0);
                let dh = rng.gen_range(-5.0..5.0);
                let dgamma = rng.gen_range(-5.0..5.0);
                let reg = regularized_face_flux(
                    &p,
                    0.0,
                    0.0,
                    &RegularizedFace {
                        h,
                        gamma,
                        h_smooth: h,
                        gamma_smooth: gamma,
                        dh,
                        dgamma,
                        dalpha1_smooth: p.a1(h).sqrt() * dh,
                        dpressure: p.sigma.sigma_prime(gamma).unwrap() * dgamma,
                    },
                );
                let orig = original_face_flux(
                    &p,
                    &OriginalFace {
                        h,
                        gamma,
                        dh,
                        dgamma,
                    },
                );
                let (a, b) = (reg.h_flux(dh), orig.h_flux(dh));
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
                let (a, b) = (reg.g_flux(dgamma), orig.g_flux(dgamma));
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_state_is_a_fixed_point_of_step() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = constant_state(g, 0.8, 0.4);
        let c = StepControl::fixed(1e-3).unwrap();
        for scheme in [Scheme::Regularized, Scheme::Original] {
            let (next, ok) = step(&s, &p, &c, scheme).unwrap();
            assert!(ok);
            for i in 0..32 {
                assert!((next.h[i] - 0.8).abs() < 1e-14);
                assert!((next.gamma[i] - 0.4).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn step_conserves_mass() {
        let g = Grid::new(64, 1.0).unwrap();
        let p = params(0.01);
        let s = cosine_state(g, 0.01);
        let c = StepControl::fixed(2.0 * g.dx() * g.dx()).unwrap();
        for scheme in [Scheme::Regularized, Scheme::Original] {
            let (next, ok) = step(&s, &p, &c, scheme).unwrap();
            assert!(ok);
            assert!(((next.mass_h() - s.mass_h()) / s.mass_h()).abs() < 1e-12);
            assert!(((next.mass_gamma() - s.mass_gamma()) / s.mass_gamma()).abs() < 1e-12);
        }
    }

    #[test]
    fn step_agrees_with_explicit_euler_to_second_order() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = cosine_state(g, 0.01);
        for scheme in [Scheme::Regularized, Scheme::Original] {
            let defect = |dt: f64| {
                let imex = try_step(&s, &p, dt, scheme, None).unwrap().unwrap();
                let expl = explicit_step(&s, &p, dt, scheme).unwrap();
                imex.h
                    .values()
                    .iter()
                    .zip(expl.h.values())
                    .chain(imex.gamma.values().iter().zip(expl.gamma.values()))
                    .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
            };
            let d1 = defect(1e-6);
            let d2 = defect(5e-7);
            let ratio = d1 / d2;
            assert!((ratio - 4.0).abs() < 0.2, "{scheme:?}: ratio {ratio}");
        }
    }

    struct Drain;

    impl Source for Drain {
        fn rates(&self, _: f64, _: f64) -> (f64, f64) {
            (-1e6, 0.0)
        }
    }

    fn barrier_state(g: Grid) -> State {
        let h0 = Field::from_fn(g, |x| if x < 0.5 { 0.0 } else { 3.0 });
        let g0 = Field::from_fn(g, |x| if x < 0.5 { 2.0 } else { 0.0 });
        State::lifted(0.0, &h0, &g0, 0.01).unwrap()
    }

    #[test]
    fn rejection_on_floor_breach() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = barrier_state(g);
        match try_step(&s, &p, 1e-3, Scheme::Regularized, Some(&Drain)).unwrap() {
            Err(Rejection::Floor { min_h, .. }) => assert!(min_h < 0.1),
            other => panic!("expected a floor rejection, got {other:?}"),
        }
    }

    #[test]
    fn run_hard_failure_carries_last_state() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = barrier_state(g);
        let opts = RunOptions {
            t_end: 1.0,
            scheme: Scheme::Regularized,
            landmarks: vec![],
        };
        let c = StepControl::for_grid(&g, 2.0).unwrap();
        let err = run_with_source(&s, &p, &c, &opts, Some(&Drain), &mut NoObserver).unwrap_err();
        match err {
            Error::StepFailure {
                last_good, rejects, ..
            } => {
                assert_eq!(*last_good, s);
                assert!(rejects > 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn run_lands_on_landmarks() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = cosine_state(g, 0.01);
        let mut hits = vec![];
        let mut obs = |st: &State, landmark: bool| {
            if landmark {
                hits.push(st.t);
            }
            Ok(())
        };
        let opts = RunOptions {
            t_end: 0.05,
            scheme: Scheme::Regularized,
            landmarks: vec![0.0, 0.013, 0.02, 0.05],
        };
        let sum = run(
            &s,
            &p,
            &StepControl::for_grid(&g, 2.0).unwrap(),
            &opts,
            &mut obs,
        )
        .unwrap();
        assert_eq!(hits, vec![0.0, 0.013, 0.02, 0.05]);
        assert_eq!(sum.final_state.t, 0.05);
    }

    #[test]
    fn constant_run_stays_put() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = constant_state(g, 0.8, 0.4);
        let opts = RunOptions {
            t_end: 1.0,
            scheme: Scheme::Regularized,
            landmarks: vec![],
        };
        let c = StepControl::new(1e-3, 1e-12, 1e-2).unwrap();
        let sum = run(&s, &p, &c, &opts, &mut NoObserver).unwrap();
        for i in 0..32 {
            assert!((sum.final_state.h[i] - 0.8).abs() < 1e-10);
            assert!((sum.final_state.gamma[i] - 0.4).abs() < 1e-10);
        }
    }

    #[test]
    fn temporal_error_halves_with_dt() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params(0.01);
        let s = cosine_state(g, 0.01);
        let t_end = 0.02;
        let solve = |dt: f64| {
            let opts = RunOptions {
                t_end,
                scheme: Scheme::Regularized,
                landmarks: vec![],
            };
            run(
                &s,
                &p,
                &StepControl::fixed(dt).unwrap(),
                &opts,
                &mut NoObserver,
            )
            .unwrap()
            .final_state
        };
        let reference = solve(t_end / 2560.0);
        let err = |dt: f64| {
            let st = solve(dt);
            st.h.values()
                .iter()
                .zip(reference.h.values())
                .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
        };
        let e1 = err(t_end / 40.0);
        let e2 = err(t_end / 80.0);
        let ratio = e1 / e2;
        assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
    }
}
