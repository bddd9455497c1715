//! Command implementations behind the `thinfilm` binary and their file
//! outputs.
//!
//! Numbers are written in the shortest representation that round-trips to
//! the same `f64`, so identical runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::constitutive::ModelParams;
use crate::diagnostics::{
    bounds_check, BoundsReport, DiagnosticsRecord, LedgerObserver, Violation,
};
use crate::dynamics::{fluxes_j_limit, run, Observer, RunOptions, RunStats, Scheme, State};
use crate::error::{Error, Result};
use crate::grid::FaceField;
use crate::study::{
    convergence_table, mms_verify, sample_times, sweep_members, MmsPlan, SweepPlan,
};

/// Environment variable overriding the output directory of every command.
pub const OUT_ENV: &str = "THINFILM_OUT";

/// Spatial and temporal orders below which `mms` fails.
pub const MIN_SPATIAL_ORDER: f64 = 1.8;
pub const MIN_TEMPORAL_ORDER: f64 = 0.9;

/// Output directory: explicit override, then [`OUT_ENV`], then the config.
pub fn output_dir(cfg: &RunConfig, cli: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.dir.clone(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Short, stable rendering of an output time for file names.
pub fn time_label(t: f64) -> String {
    let s = format!("{t:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct SnapRow {
    x: f64,
    h: f64,
    gamma: f64,
    j_f: f64,
    j_s: f64,
}

fn cell_average(face: &FaceField, i: usize) -> f64 {
    0.5 * (face[i] + face[i + 1])
}

/// Writes `x, h, gamma, j_f, j_s`; the fluxes are face values averaged to cells.
pub fn write_snapshot(path: &Path, state: &State, params: &ModelParams) -> Result<()> {
    let (jf, js) = fluxes_j_limit(state, params)?;
    let grid = state.grid();
    let mut w = csv_writer(path)?;
    for i in 0..grid.n_cells() {
        w.serialize(SnapRow {
            x: grid.center(i),
            h: state.h[i],
            gamma: state.gamma[i],
            j_f: cell_average(&jf, i),
            j_s: cell_average(&js, i),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StateRow {
    x: f64,
    h: f64,
    gamma: f64,
}

pub fn write_state(path: &Path, state: &State) -> Result<()> {
    let grid = state.grid();
    let mut w = csv_writer(path)?;
    for i in 0..grid.n_cells() {
        w.serialize(StateRow {
            x: grid.center(i),
            h: state.h[i],
            gamma: state.gamma[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LedgerRow {
    t: f64,
    mass_h: f64,
    mass_gamma: f64,
    min_h: f64,
    min_gamma: f64,
    #[serde(rename = "L_reg")]
    l_reg: Option<f64>,
    #[serde(rename = "D_reg")]
    d_reg: Option<f64>,
    #[serde(rename = "cum_D_reg")]
    cum_d_reg: Option<f64>,
    #[serde(rename = "L0")]
    l0: f64,
    #[serde(rename = "D0")]
    d0: f64,
    #[serde(rename = "cum_D0")]
    cum_d0: f64,
    slack_reg: Option<f64>,
    slack_limit: f64,
}

#[derive(Serialize)]
struct TermsRow {
    t: f64,
    d_reg_0: Option<f64>,
    d_reg_1: Option<f64>,
    d_reg_2: Option<f64>,
    d_reg_3: Option<f64>,
    d_reg_4: Option<f64>,
    d_reg_5: Option<f64>,
    d0_0: f64,
    d0_1: f64,
    d0_2: f64,
    d0_3: f64,
    d0_4: f64,
}

impl TermsRow {
    fn of(r: &DiagnosticsRecord) -> Self {
        let t = r.d_reg_terms;
        let k = |i: usize| t.map(|t| t[i]);
        Self {
            t: r.t,
            d_reg_0: k(0),
            d_reg_1: k(1),
            d_reg_2: k(2),
            d_reg_3: k(3),
            d_reg_4: k(4),
            d_reg_5: k(5),
            d0_0: r.d0_terms[0],
            d0_1: r.d0_terms[1],
            d0_2: r.d0_terms[2],
            d0_3: r.d0_terms[3],
            d0_4: r.d0_terms[4],
        }
    }
}

struct RunObserver {
    ledger: LedgerObserver,
    out: PathBuf,
    snapshots: Vec<String>,
}

impl Observer for RunObserver {
    fn observe(&mut self, state: &State, landmark: bool) -> Result<()> {
        if landmark {
            let name = format!("snap_{}.csv", time_label(state.t));
            write_snapshot(&self.out.join(&name), state, &self.ledger.params)?;
            self.snapshots.push(name);
        }
        self.ledger.observe(state, landmark)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureInfo {
    pub t: f64,
    pub dt: f64,
    pub rejects: usize,
    pub message: String,
    /// File holding the last accepted state.
    pub dump: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scheme: Scheme,
    pub ok: bool,
    pub final_record: Option<DiagnosticsRecord>,
    pub final_bounds: Option<BoundsReport>,
    pub violations: Vec<Violation>,
    pub ledger_tol: f64,
    pub worst_slack_reg: f64,
    pub worst_slack_limit: f64,
    /// Largest `|L(0) - L(t) - int D_sharp|`.
    pub max_ledger_defect: f64,
    pub entropy_bound: Option<f64>,
    pub stats: Option<RunStats>,
    pub failure: Option<FailureInfo>,
    pub snapshots: Vec<String>,
}

impl RunReport {
    fn empty(scheme: Scheme) -> Self {
        Self {
            scheme,
            ok: false,
            final_record: None,
            final_bounds: None,
            violations: vec![],
            ledger_tol: 0.0,
            worst_slack_reg: 0.0,
            worst_slack_limit: 0.0,
            max_ledger_defect: 0.0,
            entropy_bound: None,
            stats: None,
            failure: None,
            snapshots: vec![],
        }
    }
}

/// Runs the configured simulation and writes `ledger.csv`,
/// `dissipation_terms.csv`, `snap_<t>.csv` and `summary.json` to `out`.
///
/// Relative initial-data paths resolve against `base`. Hard failures and
/// ledger violations are reported through `RunReport::ok`; only setup and
/// I/O problems are errors.
pub fn cmd_run(cfg: &RunConfig, base: &Path, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let scheme = cfg.model.scheme;
    let params = cfg.params()?;
    let control = cfg.control()?;
    let mut report = RunReport::empty(scheme);
    let initial = cfg.initial_state(base)?;

    if let Err(e) = initial.check_admissible(&params, scheme) {
        report.violations.push(Violation {
            t: initial.t,
            quantity: "initial_state".into(),
            slack: barrier_slack(&initial, &params, scheme),
        });
        report.failure = Some(FailureInfo {
            t: initial.t,
            dt: control.dt,
            rejects: 0,
            message: e.to_string(),
            dump: None,
        });
        write_json(&out.join("summary.json"), &report)?;
        return Ok(report);
    }

    let mut observer = RunObserver {
        ledger: LedgerObserver::new(params, scheme, cfg.output.ledger_every),
        out: out.to_path_buf(),
        snapshots: vec![],
    };
    let options = RunOptions {
        t_end: cfg.control.t_end,
        scheme,
        landmarks: cfg.snapshot_times(),
    };
    let reference = (initial.mass_h(), initial.mass_gamma());
    let final_state = match run(&initial, &params, &control, &options, &mut observer) {
        Ok(summary) => {
            report.stats = Some(summary.stats);
            Some(summary.final_state)
        }
        Err(Error::StepFailure {
            t,
            dt,
            rejects,
            last_good,
        }) => {
            let dump = "failure_state.csv".to_string();
            write_state(&out.join(&dump), &last_good)?;
            log::error!("step failure at t = {t} (dt = {dt}, {rejects} rejections)");
            report.failure = Some(FailureInfo {
                t,
                dt,
                rejects,
                message: format!("step size fell below dt_min at t = {t}"),
                dump: Some(dump),
            });
            None
        }
        Err(e) => return Err(e),
    };

    let mut ledger = observer.ledger;
    ledger.ledger.keep_last();
    let check = ledger.ledger.ledger_check(None);
    let mut w = csv_writer(&out.join("ledger.csv"))?;
    for (r, s) in ledger.ledger.records.iter().zip(&check.rows) {
        w.serialize(LedgerRow {
            t: r.t,
            mass_h: r.mass_h,
            mass_gamma: r.mass_gamma,
            min_h: r.min_h,
            min_gamma: r.min_gamma,
            l_reg: r.l_reg,
            d_reg: r.d_reg,
            cum_d_reg: r.cum_d_reg,
            l0: r.l0,
            d0: r.d0,
            cum_d0: r.cum_d0,
            slack_reg: s.slack_reg,
            slack_limit: s.slack_limit,
        })?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("dissipation_terms.csv"))?;
    for r in &ledger.ledger.records {
        w.serialize(TermsRow::of(r))?;
    }
    w.flush()?;

    report
        .violations
        .extend(ledger.ledger.violations.iter().cloned());
    report.violations.extend(check.violations.iter().cloned());
    report.ledger_tol = check.tol;
    report.worst_slack_reg = check.worst_reg();
    report.worst_slack_limit = check.worst_limit();
    report.max_ledger_defect = check.max_defect();
    report.entropy_bound = ledger.entropy_bound();
    report.final_record = ledger.ledger.records.last().cloned();
    report.final_bounds = final_state
        .as_ref()
        .map(|s| bounds_check(s, &params, scheme, reference, ledger.mass_tol));
    report.snapshots = observer.snapshots;
    report.ok = report.failure.is_none() && report.violations.is_empty();
    write_json(&out.join("summary.json"), &report)?;
    Ok(report)
}

fn barrier_slack(state: &State, params: &ModelParams, scheme: Scheme) -> f64 {
    let (hf, gf) = match scheme {
        Scheme::Regularized => (params.sqrt_eps(), params.eps),
        Scheme::Original => (0.0, 0.0),
    };
    (state.h.min() - hf).min(state.gamma.min() - gf)
}

#[derive(Serialize)]
struct SweepRow {
    eps_a: f64,
    eps_b: f64,
    h_l2_qt: Option<f64>,
    h_l2_sup: Option<f64>,
    gamma_l2_qt: Option<f64>,
    gamma_l2_sup: Option<f64>,
    rate_h: Option<f64>,
    rate_gamma: Option<f64>,
    failed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberStatus {
    pub eps: f64,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub ok: bool,
    pub strictly_decreasing: bool,
    pub members: Vec<MemberStatus>,
    pub table: crate::study::ConvergenceTable,
}

/// Builds the sweep of `cfg` with the `[sweep]` eps list, horizon and sampling.
pub fn sweep_plan(
    cfg: &RunConfig,
    base: &Path,
    eps_list: &[f64],
    workers: usize,
) -> Result<SweepPlan> {
    let (h0, gamma0) = cfg.initial_fields(base)?;
    Ok(SweepPlan {
        eps_list: eps_list.to_vec(),
        grid: cfg.grid()?,
        params: cfg.params()?,
        h0,
        gamma0,
        t_end: cfg.sweep.t_end,
        dt_max_factor: cfg.control.dt_max_factor,
        times: sample_times(cfg.sweep.t_end, cfg.sweep.samples),
        workers,
    })
}

/// Runs the ε sweep, writing `sweep.csv` and `sweep.json`. `ok` requires every
/// member to succeed and both distance columns to decrease strictly.
pub fn cmd_sweep(
    cfg: &RunConfig,
    base: &Path,
    eps_list: &[f64],
    out: &Path,
    workers: usize,
) -> Result<SweepReport> {
    let plan = sweep_plan(cfg, base, eps_list, workers)?;
    plan.validate()?;
    fs::create_dir_all(out)?;
    let members = sweep_members(&plan)?;
    let table = convergence_table(&members);
    let mut w = csv_writer(&out.join("sweep.csv"))?;
    for r in &table.rows {
        w.serialize(SweepRow {
            eps_a: r.eps_a,
            eps_b: r.eps_b,
            h_l2_qt: r.h.map(|d| d.l2_qt),
            h_l2_sup: r.h.map(|d| d.l2_sup),
            gamma_l2_qt: r.gamma.map(|d| d.l2_qt),
            gamma_l2_sup: r.gamma.map(|d| d.l2_sup),
            rate_h: r.rate_h,
            rate_gamma: r.rate_gamma,
            failed: r.failed,
        })?;
    }
    w.flush()?;
    let decreasing = table.strictly_decreasing();
    let report = SweepReport {
        ok: decreasing,
        strictly_decreasing: decreasing,
        members: members
            .iter()
            .map(|m| MemberStatus {
                eps: m.eps,
                ok: m.samples.is_ok() && m.ledger_ok,
                error: m.samples.as_ref().err().cloned(),
            })
            .collect(),
        table,
    };
    write_json(&out.join("sweep.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct MmsRow<'a> {
    study: &'a str,
    resolution: f64,
    err_h: f64,
    err_gamma: f64,
    order: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MmsOutcome {
    pub ok: bool,
    pub report: crate::study::MmsReport,
}

pub fn mms_plan(cfg: &RunConfig) -> MmsPlan {
    let m = &cfg.mms;
    MmsPlan {
        length: cfg.grid.length,
        t_end: m.t_end,
        spatial_cells: m.spatial_cells.clone(),
        spatial_dt: m.spatial_dt,
        temporal_cells: m.temporal_cells,
        time_steps: m.time_steps.clone(),
        ..MmsPlan::default()
    }
}

/// Manufactured-solution study of the original scheme with the configured
/// constants; writes `mms.csv` and `mms.json`.
pub fn cmd_mms(cfg: &RunConfig, out: &Path) -> Result<MmsOutcome> {
    fs::create_dir_all(out)?;
    let report = mms_verify(Scheme::Original, &cfg.params()?, &mms_plan(cfg))?;
    let mut w = csv_writer(&out.join("mms.csv"))?;
    for (study, rows) in [("spatial", &report.spatial), ("temporal", &report.temporal)] {
        for r in rows {
            w.serialize(MmsRow {
                study,
                resolution: r.resolution,
                err_h: r.err_h,
                err_gamma: r.err_gamma,
                order: r.order,
            })?;
        }
    }
    w.flush()?;
    let ok =
        report.spatial_order >= MIN_SPATIAL_ORDER && report.temporal_order >= MIN_TEMPORAL_ORDER;
    let outcome = MmsOutcome { ok, report };
    write_json(&out.join("mms.json"), &outcome)?;
    Ok(outcome)
}

/// Parses and validates a config, and builds its initial state.
pub fn cmd_check_config(path: &Path) -> Result<RunConfig> {
    let cfg = crate::config::load_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.params()?;
    cfg.control()?;
    cfg.initial_state(base)?;
    Ok(cfg)
}
