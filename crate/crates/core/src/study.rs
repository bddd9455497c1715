//! Refinement studies: the ε self-convergence sweep, time-step
//! self-convergence and manufactured-solution order checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::constitutive::ModelParams;
use crate::diagnostics::LedgerObserver;
use crate::dynamics::{
    run, run_with_source, Observer, RunOptions, Scheme, Source, State, StepControl,
};
use crate::error::{Error, Result};
use crate::grid::{discrete_norm, time_integral, Field, Grid, Norm};

/// `n + 1` equally spaced times in `[0, t_end]`, the last one exactly `t_end`.
pub fn sample_times(t_end: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let mut v: Vec<f64> = (0..n).map(|i| t_end * i as f64 / n as f64).collect();
    v.push(t_end);
    v
}

/// Collects states at landmark times, and feeds a ledger.
struct Sampler {
    ledger: LedgerObserver,
    samples: Vec<State>,
}

impl Observer for Sampler {
    fn observe(&mut self, state: &State, landmark: bool) -> Result<()> {
        if landmark {
            self.samples.push(state.clone());
        }
        self.ledger.observe(state, landmark)
    }
}

#[derive(Clone, Debug)]
pub struct SweepPlan {
    /// Strictly decreasing, at least three entries.
    pub eps_list: Vec<f64>,
    pub grid: Grid,
    /// Base parameters; `eps` is overwritten per member.
    pub params: ModelParams,
    /// Unlifted initial data.
    pub h0: Field,
    pub gamma0: Field,
    pub t_end: f64,
    pub dt_max_factor: f64,
    pub times: Vec<f64>,
    /// Worker threads; `0` uses the available parallelism.
    pub workers: usize,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.len() < 3 {
            return Err(Error::Study(format!(
                "a sweep needs at least 3 eps values to estimate rates, got {}",
                self.eps_list.len()
            )));
        }
        if !self.eps_list.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Study("eps_list must be strictly decreasing".into()));
        }
        if !self.eps_list.iter().all(|&e| e > 0.0 && e < 1.0) {
            return Err(Error::Study("eps values must lie in (0, 1)".into()));
        }
        if self.times.len() < 2
            || self.times.first() != Some(&0.0)
            || self.times.last() != Some(&self.t_end)
        {
            return Err(Error::Study("sample times must run from 0 to t_end".into()));
        }
        Ok(())
    }
}

/// Outcome of one sweep member.
#[derive(Clone, Debug)]
pub struct MemberRun {
    pub eps: f64,
    pub samples: Result<Vec<State>, String>,
    pub ledger_ok: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Distances {
    /// Discrete `L2(Q_T)`.
    pub l2_qt: f64,
    /// Discrete `L2(0, T; C([0, L]))`.
    pub l2_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps_a: f64,
    pub eps_b: f64,
    pub h: Option<Distances>,
    pub gamma: Option<Distances>,
    /// `log2` of the previous row's `L2(Q_T)` distance over this row's.
    pub rate_h: Option<f64>,
    pub rate_gamma: Option<f64>,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }

    /// `L2(Q_T)` distances strictly decrease along the sweep, for both unknowns.
    pub fn strictly_decreasing(&self) -> bool {
        let col = |f: &dyn Fn(&ConvergenceRow) -> Option<Distances>| {
            let v: Option<Vec<f64>> = self.rows.iter().map(|r| f(r).map(|d| d.l2_qt)).collect();
            v.is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]))
        };
        !self.any_failed() && col(&|r| r.h) && col(&|r| r.gamma)
    }
}

/// Distances between two trajectories sampled at the same times.
pub fn trajectory_distance(
    a: &[State],
    b: &[State],
    pick: impl Fn(&State) -> &Field,
) -> Result<Distances> {
    if a.len() != b.len() {
        return Err(Error::Study(format!(
            "trajectories have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let mut l2 = Vec::with_capacity(a.len());
    let mut sup = Vec::with_capacity(a.len());
    for (sa, sb) in a.iter().zip(b) {
        if sa.t != sb.t {
            return Err(Error::Study(format!(
                "sample times differ: {} vs {}",
                sa.t, sb.t
            )));
        }
        let diff = Field::new(
            *pick(sa).grid(),
            pick(sa)
                .values()
                .iter()
                .zip(pick(sb).values())
                .map(|(x, y)| x - y)
                .collect(),
        )?;
        l2.push((sa.t, discrete_norm(&diff, Norm::L2).powi(2)));
        sup.push((sa.t, discrete_norm(&diff, Norm::Linf).powi(2)));
    }
    Ok(Distances {
        l2_qt: time_integral(&l2).sqrt(),
        l2_sup: time_integral(&sup).sqrt(),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Study(format!("cannot start worker pool: {e}")))
}

fn run_member(plan: &SweepPlan, eps: f64) -> MemberRun {
    let attempt = || -> Result<(Vec<State>, bool)> {
        let params = plan.params.with_eps(eps)?;
        let initial = State::lifted(0.0, &plan.h0, &plan.gamma0, eps)?;
        let control = StepControl::for_grid(&plan.grid, plan.dt_max_factor)?;
        let options = RunOptions {
            t_end: plan.t_end,
            scheme: Scheme::Regularized,
            landmarks: plan.times.clone(),
        };
        let mut sampler = Sampler {
            ledger: LedgerObserver::new(params, Scheme::Regularized, usize::MAX),
            samples: vec![],
        };
        run(&initial, &params, &control, &options, &mut sampler)?;
        let report = sampler.ledger.ledger.ledger_check(None);
        let ok = report.violations.is_empty() && sampler.ledger.ledger.violations.is_empty();
        Ok((sampler.samples, ok))
    };
    match attempt() {
        Ok((samples, ledger_ok)) => MemberRun {
            eps,
            samples: Ok(samples),
            ledger_ok,
        },
        Err(e) => {
            log::warn!("sweep member eps = {eps} failed: {e}");
            MemberRun {
                eps,
                samples: Err(e.to_string()),
                ledger_ok: false,
            }
        }
    }
}

/// Runs every member of the sweep (concurrently) and returns the members in
/// `eps_list` order.
pub fn sweep_members(plan: &SweepPlan) -> Result<Vec<MemberRun>> {
    plan.validate()?;
    let pool = pool(plan.workers)?;
    Ok(pool.install(|| {
        plan.eps_list
            .par_iter()
            .map(|&eps| run_member(plan, eps))
            .collect()
    }))
}

/// Pairwise distances of consecutive members.
pub fn convergence_table(members: &[MemberRun]) -> ConvergenceTable {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(members.len().saturating_sub(1));
    for w in members.windows(2) {
        let dist = match (&w[0].samples, &w[1].samples) {
            (Ok(a), Ok(b)) => trajectory_distance(a, b, |s| &s.h)
                .and_then(|h| trajectory_distance(a, b, |s| &s.gamma).map(|g| (h, g)))
                .ok(),
            _ => None,
        };
        let prev = rows.last().and_then(|r| r.h.zip(r.gamma));
        let rate = |p: Option<f64>, c: Option<f64>| match (p, c) {
            (Some(p), Some(c)) if p > 0.0 && c > 0.0 => Some((p / c).log2()),
            _ => None,
        };
        rows.push(ConvergenceRow {
            eps_a: w[0].eps,
            eps_b: w[1].eps,
            h: dist.map(|d| d.0),
            gamma: dist.map(|d| d.1),
            rate_h: rate(prev.map(|p| p.0.l2_qt), dist.map(|d| d.0.l2_qt)),
            rate_gamma: rate(prev.map(|p| p.1.l2_qt), dist.map(|d| d.1.l2_qt)),
            failed: dist.is_none() || !w[0].ledger_ok || !w[1].ledger_ok,
        });
    }
    ConvergenceTable { rows }
}

pub fn eps_sweep(plan: &SweepPlan) -> Result<ConvergenceTable> {
    Ok(convergence_table(&sweep_members(plan)?))
}

/// `h* = a_h + b_h cos(pi x / L) m(t)`, `gamma* = a_g + b_g cos(pi x / L) m(t)`
/// with `m(t) = 1 + c sin(omega t)`, an exact solution of the original
/// system forced by the residual source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ManufacturedPair {
    pub a_h: f64,
    pub b_h: f64,
    pub a_g: f64,
    pub b_g: f64,
    pub c: f64,
    pub omega: f64,
}

impl ManufacturedPair {
    pub const DEFAULT: ManufacturedPair = ManufacturedPair {
        a_h: 1.0,
        b_h: 0.3,
        a_g: 0.6,
        b_g: 0.25,
        c: 0.5,
        omega: 2.0,
    };

    /// The same profile frozen at `m = 1`.
    pub fn steady(self) -> Self {
        Self { c: 0.0, ..self }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let mmax = 1.0 + self.c.abs();
        if !(self.a_h - self.b_h.abs() * mmax > 0.0 && self.a_g - self.b_g.abs() * mmax > 0.0) {
            return Err(Error::Study(format!(
                "manufactured pair is not strictly positive: {self:?}"
            )));
        }
        if self.a_g + self.b_g.abs() * mmax > params.sigma.gamma_max() {
            return Err(Error::Study(
                "manufactured concentration leaves the surface-tension range".into(),
            ));
        }
        Ok(())
    }

    fn m(&self, t: f64) -> (f64, f64) {
        (
            1.0 + self.c * (self.omega * t).sin(),
            self.c * self.omega * (self.omega * t).cos(),
        )
    }

    /// `(h, gamma)` at `(t, x)` on a domain of length `len`.
    pub fn exact(&self, len: f64, t: f64, x: f64) -> (f64, f64) {
        let (m, _) = self.m(t);
        let c = (std::f64::consts::PI * x / len).cos();
        (self.a_h + self.b_h * c * m, self.a_g + self.b_g * c * m)
    }

    pub fn state(&self, grid: Grid, t: f64) -> Result<State> {
        let len = grid.length();
        State::new(
            t,
            Field::from_fn(grid, |x| self.exact(len, t, x).0),
            Field::from_fn(grid, |x| self.exact(len, t, x).1),
        )
    }
}

/// Residual source of a manufactured pair for the original system.
pub struct ManufacturedSource {
    pub pair: ManufacturedPair,
    pub params: ModelParams,
    pub length: f64,
}

impl Source for ManufacturedSource {
    fn rates(&self, t: f64, x: f64) -> (f64, f64) {
        let p = &self.pair;
        let k = std::f64::consts::PI / self.length;
        let (m, dm) = p.m(t);
        let (c, s) = ((k * x).cos(), (k * x).sin());
        let h = p.a_h + p.b_h * c * m;
        let g = p.a_g + p.b_g * c * m;
        let (ht, gt) = (p.b_h * c * dm, p.b_g * c * dm);
        let (hx, gx) = (-p.b_h * k * s * m, -p.b_g * k * s * m);
        let (hxx, gxx) = (-p.b_h * k * k * c * m, -p.b_g * k * k * c * m);
        let big_g = self.params.g;
        let sigma = &self.params.sigma;
        let (sp, spp) = (
            sigma.sigma_prime_unchecked(g),
            sigma.sigma_second_unchecked(g),
        );
        // F_h = (G h^3 / 3) h_x - (h^2 / 2) sigma'(g) g_x
        let dfh = big_g * h * h * hx * hx + big_g * h * h * h / 3.0 * hxx
            - (h * hx * sp * gx + 0.5 * h * h * spp * gx * gx + 0.5 * h * h * sp * gxx);
        // F_g = (G h^2 / 2) g h_x + (D - h g sigma'(g)) g_x
        let dfg = big_g * (h * g * hx * hx + 0.5 * h * h * gx * hx + 0.5 * h * h * g * hxx)
            - (hx * g * sp + h * gx * sp + h * g * spp * gx) * gx
            + (self.params.d - h * g * sp) * gxx;
        (ht - dfh, gt - dfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderRow {
    /// Number of cells (spatial study) or step size (temporal study).
    pub resolution: f64,
    pub err_h: f64,
    pub err_gamma: f64,
    /// Observed order against the previous row, worst of the two unknowns.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MmsReport {
    pub spatial: Vec<OrderRow>,
    pub temporal: Vec<OrderRow>,
    /// Order of the finest pair.
    pub spatial_order: f64,
    pub temporal_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MmsPlan {
    pub pair: ManufacturedPair,
    pub length: f64,
    pub t_end: f64,
    /// Grids of the spatial study (each refinement halves `dx`).
    pub spatial_cells: Vec<usize>,
    /// Step used by the spatial study, on the steady pair.
    pub spatial_dt: f64,
    /// Grid and steps of the temporal study (each refinement halves `dt`).
    pub temporal_cells: usize,
    pub time_steps: Vec<f64>,
}

impl Default for MmsPlan {
    fn default() -> Self {
        Self {
            pair: ManufacturedPair::DEFAULT,
            length: 1.0,
            t_end: 0.5,
            spatial_cells: vec![32, 64, 128, 256],
            spatial_dt: 1e-3,
            temporal_cells: 128,
            time_steps: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
        }
    }
}

fn with_orders(
    mut rows: Vec<OrderRow>,
    ratio: impl Fn(&OrderRow, &OrderRow) -> f64,
) -> Vec<OrderRow> {
    for i in 1..rows.len() {
        let (a, b) = (&rows[i - 1], &rows[i]);
        let r = ratio(a, b).ln();
        let oh = (a.err_h / b.err_h).ln() / r;
        let og = (a.err_gamma / b.err_gamma).ln() / r;
        rows[i].order = Some(oh.min(og));
    }
    rows
}

/// Max-norm error of a forced original-scheme run against the exact pair.
pub fn mms_error(
    pair: &ManufacturedPair,
    params: &ModelParams,
    grid: Grid,
    dt: f64,
    t_end: f64,
) -> Result<(f64, f64)> {
    pair.validate(params)?;
    let initial = pair.state(grid, 0.0)?;
    let source = ManufacturedSource {
        pair: *pair,
        params: *params,
        length: grid.length(),
    };
    let options = RunOptions {
        t_end,
        scheme: Scheme::Original,
        landmarks: vec![],
    };
    let end = run_with_source(
        &initial,
        params,
        &StepControl::fixed(dt)?,
        &options,
        Some(&source),
        &mut crate::dynamics::NoObserver,
    )?
    .final_state;
    let exact = pair.state(grid, t_end)?;
    let err = |a: &Field, b: &Field| {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    };
    Ok((err(&end.h, &exact.h), err(&end.gamma, &exact.gamma)))
}

/// Observed spatial and temporal orders of the original scheme.
pub fn mms_verify(scheme: Scheme, params: &ModelParams, plan: &MmsPlan) -> Result<MmsReport> {
    if scheme != Scheme::Original {
        return Err(Error::Study(
            "manufactured solutions are available for the original system only".into(),
        ));
    }
    if plan.spatial_cells.len() < 2 || plan.time_steps.len() < 2 {
        return Err(Error::Study(
            "need at least two resolutions per study".into(),
        ));
    }
    plan.pair.validate(params)?;
    let steady = plan.pair.steady();
    let spatial: Vec<OrderRow> = plan
        .spatial_cells
        .par_iter()
        .map(|&n| {
            let grid = Grid::new(n, plan.length)?;
            let (eh, eg) = mms_error(&steady, params, grid, plan.spatial_dt, plan.t_end)?;
            Ok(OrderRow {
                resolution: n as f64,
                err_h: eh,
                err_gamma: eg,
                order: None,
            })
        })
        .collect::<Result<_>>()?;
    let grid = Grid::new(plan.temporal_cells, plan.length)?;
    let temporal: Vec<OrderRow> = plan
        .time_steps
        .par_iter()
        .map(|&dt| {
            let (eh, eg) = mms_error(&plan.pair, params, grid, dt, plan.t_end)?;
            Ok(OrderRow {
                resolution: dt,
                err_h: eh,
                err_gamma: eg,
                order: None,
            })
        })
        .collect::<Result<_>>()?;
    let spatial = with_orders(spatial, |a, b| b.resolution / a.resolution);
    let temporal = with_orders(temporal, |a, b| a.resolution / b.resolution);
    Ok(MmsReport {
        spatial_order: spatial.last().and_then(|r| r.order).unwrap_or(f64::NAN),
        temporal_order: temporal.last().and_then(|r| r.order).unwrap_or(f64::NAN),
        spatial,
        temporal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DtRow {
    pub dt_a: f64,
    pub dt_b: f64,
    pub h: Distances,
    pub gamma: Distances,
    pub order: Option<f64>,
}

/// Trajectory distances of fixed-step runs at consecutive `dt` (ratio 2),
/// sampled at shared `times`.
pub fn dt_selfconvergence(
    initial: &State,
    params: &ModelParams,
    scheme: Scheme,
    times: &[f64],
    dt_list: &[f64],
) -> Result<Vec<DtRow>> {
    if dt_list.len() < 2
        || !dt_list
            .windows(2)
            .all(|w| (w[0] / w[1] - 2.0).abs() < 1e-12)
    {
        return Err(Error::Study(
            "dt_list must be geometric with ratio 2".into(),
        ));
    }
    let t_end = *times
        .last()
        .ok_or_else(|| Error::Study("no sample times".into()))?;
    let trajectories: Vec<Vec<State>> = dt_list
        .par_iter()
        .map(|&dt| {
            let mut samples = vec![];
            let mut obs = |s: &State, landmark: bool| {
                if landmark {
                    samples.push(s.clone());
                }
                Ok(())
            };
            let options = RunOptions {
                t_end,
                scheme,
                landmarks: times.to_vec(),
            };
            run(
                initial,
                params,
                &StepControl::fixed(dt)?,
                &options,
                &mut obs,
            )?;
            Ok(samples)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<DtRow> = vec![];
    for (i, w) in trajectories.windows(2).enumerate() {
        let h = trajectory_distance(&w[0], &w[1], |s| &s.h)?;
        let gamma = trajectory_distance(&w[0], &w[1], |s| &s.gamma)?;
        let order = rows.last().and_then(|p: &DtRow| {
            (h.l2_qt > 0.0 && p.h.l2_qt > 0.0).then(|| (p.h.l2_qt / h.l2_qt).log2())
        });
        rows.push(DtRow {
            dt_a: dt_list[i],
            dt_b: dt_list[i + 1],
            h,
            gamma,
            order,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{LogSign, SigmaModel, DEFAULT_ETA1};
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::new(
            1.0,
            0.1,
            SigmaModel::linear(2.0, 1.0).unwrap(),
            0.01,
            DEFAULT_ETA1,
        )
        .unwrap()
    }

    fn plan(grid: Grid, h0: Field, g0: Field, eps_list: Vec<f64>, t_end: f64) -> SweepPlan {
        SweepPlan {
            eps_list,
            grid,
            params: params(),
            h0,
            gamma0: g0,
            t_end,
            dt_max_factor: 2.0,
            times: sample_times(t_end, 10),
            workers: 2,
        }
    }

    #[test]
    fn identical_runs_have_zero_distance() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = plan(
            g,
            Field::constant(g, 1.0),
            Field::constant(g, 1.0),
            vec![0.1, 0.01, 0.001],
            0.01,
        );
        let m = run_member(&p, 0.01);
        let s = m.samples.unwrap();
        let d = trajectory_distance(&s, &s, |s| &s.h).unwrap();
        assert_eq!(d, Distances::default());
    }

    #[test]
    fn constant_data_distances_are_the_lift() {
        let g = Grid::new(32, 1.0).unwrap();
        let t_end = 0.05;
        let p = plan(
            g,
            Field::constant(g, 0.7),
            Field::constant(g, 0.4),
            vec![0.1, 0.01, 0.001],
            t_end,
        );
        let table = eps_sweep(&p).unwrap();
        assert!(!table.any_failed());
        for r in &table.rows {
            let bound = (r.eps_a.sqrt() - r.eps_b.sqrt()).abs() * t_end.sqrt();
            let h = r.h.unwrap();
            assert!(
                h.l2_qt <= bound * (1.0 + 1e-9) && (h.l2_qt - bound).abs() < 1e-9,
                "{h:?} {bound}"
            );
            let gb = (r.eps_a - r.eps_b).abs() * t_end.sqrt();
            assert!((r.gamma.unwrap().l2_qt - gb).abs() < 1e-9);
        }
    }

    #[test]
    fn plan_validation() {
        let g = Grid::new(16, 1.0).unwrap();
        let f = Field::constant(g, 1.0);
        assert!(plan(g, f.clone(), f.clone(), vec![0.1], 0.1)
            .validate()
            .is_err());
        assert!(plan(g, f.clone(), f.clone(), vec![0.1, 0.2, 0.01], 0.1)
            .validate()
            .is_err());
        assert!(plan(g, f.clone(), f, vec![0.1, 0.01, 0.001], 0.1)
            .validate()
            .is_ok());
    }

    #[test]
    fn failed_member_marks_row() {
        let ok = MemberRun {
            eps: 0.1,
            samples: Ok(vec![]),
            ledger_ok: true,
        };
        let bad = MemberRun {
            eps: 0.01,
            samples: Err("boom".into()),
            ledger_ok: false,
        };
        let t = convergence_table(&[ok.clone(), bad, ok]);
        assert!(t.rows.iter().all(|r| r.failed));
        assert!(!t.strictly_decreasing());
    }

    #[test]
    fn manufactured_source_vanishes_for_constants() {
        let pair = ManufacturedPair {
            b_h: 0.0,
            b_g: 0.0,
            ..ManufacturedPair::DEFAULT
        };
        let src = ManufacturedSource {
            pair,
            params: params(),
            length: 1.0,
        };
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(src.rates(0.2, x), (0.0, 0.0));
        }
        let g = Grid::new(16, 1.0).unwrap();
        let (eh, eg) = mms_error(&pair, &params(), g, 1e-2, 0.3).unwrap();
        assert!(eh < 1e-12 && eg < 1e-12);
    }

    #[test]
    fn manufactured_source_matches_finite_differences() {
        let sigma = SigmaModel::logarithmic(2.0, 0.5, 1.0, LogSign::Plus, 5.0).unwrap();
        let params = ModelParams::new(1.3, 0.2, sigma, 0.01, DEFAULT_ETA1).unwrap();
        let pair = ManufacturedPair::DEFAULT;
        let src = ManufacturedSource {
            pair,
            params,
            length: 2.0,
        };
        let e = 1e-4;
        let ex = |t, x| pair.exact(2.0, t, x);
        let flux = |t: f64, x: f64| {
            let (h, g) = ex(t, x);
            let hx = (ex(t, x + e).0 - ex(t, x - e).0) / (2.0 * e);
            let gx = (ex(t, x + e).1 - ex(t, x - e).1) / (2.0 * e);
            let sp = params.sigma.sigma_prime(g).unwrap();
            (
                1.3 * h.powi(3) / 3.0 * hx - h * h / 2.0 * sp * gx,
                1.3 * h * h / 2.0 * g * hx + (0.2 - h * g * sp) * gx,
            )
        };
        for (t, x) in [(0.1, 0.3), (0.7, 1.1), (0.0, 1.7)] {
            let ht = (ex(t + e, x).0 - ex(t - e, x).0) / (2.0 * e);
            let gt = (ex(t + e, x).1 - ex(t - e, x).1) / (2.0 * e);
            let dfh = (flux(t, x + e).0 - flux(t, x - e).0) / (2.0 * e);
            let dfg = (flux(t, x + e).1 - flux(t, x - e).1) / (2.0 * e);
            let (sh, sg) = src.rates(t, x);
            assert!((sh - (ht - dfh)).abs() < 1e-5, "{sh} vs {}", ht - dfh);
            assert!((sg - (gt - dfg)).abs() < 1e-5, "{sg} vs {}", gt - dfg);
        }
    }

    #[test]
    fn nonpositive_pair_is_rejected() {
        let pair = ManufacturedPair {
            b_h: 0.9,
            ..ManufacturedPair::DEFAULT
        };
        assert!(pair.validate(&params()).is_err());
        let plan = MmsPlan {
            pair,
            ..MmsPlan::default()
        };
        assert!(mms_verify(Scheme::Original, &params(), &plan).is_err());
        assert!(mms_verify(Scheme::Regularized, &params(), &MmsPlan::default()).is_err());
    }

    #[test]
    fn spatial_error_drops_fourfold() {
        let plan = MmsPlan {
            spatial_cells: vec![16, 32, 64, 128],
            time_steps: vec![1e-2, 5e-3],
            temporal_cells: 16,
            t_end: 0.2,
            ..MmsPlan::default()
        };
        let rep = mms_verify(Scheme::Original, &params(), &plan).unwrap();
        for r in &rep.spatial[1..] {
            assert!(r.order.unwrap() > 1.8, "{rep:?}");
        }
    }

    #[test]
    fn dt_selfconvergence_orders() {
        let g = Grid::new(32, 1.0).unwrap();
        let p = params();
        let constant = State::new(0.0, Field::constant(g, 0.5), Field::constant(g, 0.5)).unwrap();
        let times = sample_times(0.02, 4);
        let dts = [2e-3, 1e-3, 5e-4];
        for r in dt_selfconvergence(&constant, &p, Scheme::Regularized, &times, &dts).unwrap() {
            assert!(r.h.l2_qt < 1e-13 && r.gamma.l2_qt < 1e-13);
        }
        let h0 = Field::from_fn(g, |x| 1.0 + 0.5 * (PI * x).cos());
        let g0 = Field::from_fn(g, |x| 0.5 + 0.4 * (PI * x).cos());
        let s = State::lifted(0.0, &h0, &g0, 0.01).unwrap();
        let rows = dt_selfconvergence(
            &s,
            &p,
            Scheme::Regularized,
            &times,
            &[5e-4, 2.5e-4, 1.25e-4, 6.25e-5],
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].h.l2_qt < w[0].h.l2_qt);
        }
        let order = rows.last().unwrap().order.unwrap();
        assert!((order - 1.0).abs() < 0.2, "{order}");
        assert!(dt_selfconvergence(&s, &p, Scheme::Regularized, &times, &[1e-3, 3e-4]).is_err());
    }
}
