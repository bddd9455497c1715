//! Run configuration: a sectioned TOML file.
//!
//! ```toml
//! [grid]
//! n_cells = 256
//! length = 1.0
//!
//! [model]
//! scheme = "regularized"   # or "original"
//! g = 1.0
//! d = 0.1
//! eps = 0.01
//! # eta1 = 0.875           # in (3/4, 1)
//!
//! [sigma]
//! kind = "linear"          # or "logarithmic" with gamma_inf, sign, gamma_max
//! sigma_s = 2.0
//! beta = 1.0
//!
//! [initial]
//! kind = "cosine"          # "constant" (h, gamma) | "cosine" | "file" (path)
//! h_mean = 1.0
//! h_amp = 0.5
//! gamma_mean = 0.5
//! gamma_amp = 0.4
//! mode = 1
//! # lift = true            # default: true for presets, false for files
//!
//! [control]
//! t_end = 0.5
//! # dt0 = dx^2, dt_min = 1e-12, dt_max_factor = 2 (dt_max = factor dx^2),
//! # max_rejects = 60
//!
//! [output]
//! dir = "out"
//! # snapshot_every = t_end / 10, ledger_every = 10 (accepted steps)
//!
//! [sweep]                  # optional
//! # eps = [1e-1, 1e-2, 1e-3, 1e-4], t_end = 0.25, samples = 50
//!
//! [mms]                    # optional
//! # spatial_cells = [32, 64, 128, 256], spatial_dt = 1e-3,
//! # temporal_cells = 128, time_steps = [1e-2, 5e-3, 2.5e-3, 1.25e-3], t_end = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constitutive::{ModelParams, SigmaModel, DEFAULT_ETA1, ETA};
use crate::dynamics::{Scheme, State, StepControl};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub scheme: Scheme,
    pub g: f64,
    pub d: f64,
    pub eps: f64,
    #[serde(default = "default_eta1")]
    pub eta1: f64,
}

fn default_eta1() -> f64 {
    DEFAULT_ETA1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        h: f64,
        gamma: f64,
        lift: Option<bool>,
    },
    Cosine {
        h_mean: f64,
        h_amp: f64,
        gamma_mean: f64,
        gamma_amp: f64,
        mode: i64,
        lift: Option<bool>,
    },
    /// CSV with header containing `h` and `gamma` columns, one row per cell.
    File { path: PathBuf, lift: Option<bool> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub t_end: f64,
    pub dt0: Option<f64>,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max_factor")]
    pub dt_max_factor: f64,
    #[serde(default = "default_max_rejects")]
    pub max_rejects: usize,
}

fn default_dt_min() -> f64 {
    1e-12
}

fn default_dt_max_factor() -> f64 {
    2.0
}

fn default_max_rejects() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    pub snapshot_every: Option<f64>,
    #[serde(default = "default_ledger_every")]
    pub ledger_every: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_ledger_every() -> usize {
    10
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_every: None,
            ledger_every: default_ledger_every(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sweep_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_sweep_t_end")]
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_sweep_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

fn default_sweep_t_end() -> f64 {
    0.25
}

fn default_samples() -> usize {
    50
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            eps: default_sweep_eps(),
            t_end: default_sweep_t_end(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    #[serde(default = "default_spatial_cells")]
    pub spatial_cells: Vec<usize>,
    #[serde(default = "default_spatial_dt")]
    pub spatial_dt: f64,
    #[serde(default = "default_temporal_cells")]
    pub temporal_cells: usize,
    #[serde(default = "default_time_steps")]
    pub time_steps: Vec<f64>,
    #[serde(default = "default_mms_t_end")]
    pub t_end: f64,
}

fn default_spatial_cells() -> Vec<usize> {
    vec![32, 64, 128, 256]
}

fn default_spatial_dt() -> f64 {
    1e-3
}

fn default_temporal_cells() -> usize {
    128
}

fn default_time_steps() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3, 1.25e-3]
}

fn default_mms_t_end() -> f64 {
    0.5
}

impl Default for MmsSection {
    fn default() -> Self {
        Self {
            spatial_cells: default_spatial_cells(),
            spatial_dt: default_spatial_dt(),
            temporal_cells: default_temporal_cells(),
            time_steps: default_time_steps(),
            t_end: default_mms_t_end(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub sigma: SigmaModel,
    pub initial: InitialSection,
    pub control: ControlSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub mms: MmsSection,
}

/// 1-based line of byte `offset` in `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, or of the section header.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = i + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        msg: e.message().to_string(),
    })?;
    cfg.validate()
        .map_err(|(section, key, msg)| Error::Config {
            line: locate(text, section, key),
            msg: format!("[{section}] {key}: {msg}"),
        })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

type Invalid = (&'static str, &'static str, String);

fn require(
    ok: bool,
    section: &'static str,
    key: &'static str,
    msg: impl FnOnce() -> String,
) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err((section, key, msg()))
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), Invalid> {
        let g = &self.grid;
        require(
            g.n_cells >= crate::grid::MIN_CELLS,
            "grid",
            "n_cells",
            || {
                format!(
                    "need at least {} cells, got {}",
                    crate::grid::MIN_CELLS,
                    g.n_cells
                )
            },
        )?;
        require(
            g.length.is_finite() && g.length > 0.0,
            "grid",
            "length",
            || format!("must be positive, got {}", g.length),
        )?;
        let m = &self.model;
        require(m.g.is_finite() && m.g > 0.0, "model", "g", || {
            format!("must be positive, got {}", m.g)
        })?;
        require(m.d.is_finite() && m.d > 0.0, "model", "d", || {
            format!("must be positive, got {}", m.d)
        })?;
        require(m.eps > 0.0 && m.eps < 1.0, "model", "eps", || {
            format!("eps must lie in (0, 1), got {}", m.eps)
        })?;
        require(m.eta1 > ETA && m.eta1 < 1.0, "model", "eta1", || {
            format!("eta1 must lie in (eta, 1) = ({ETA}, 1), got {}", m.eta1)
        })?;
        self.sigma
            .validate()
            .map_err(|e| ("sigma", "kind", e.to_string()))?;
        match &self.initial {
            InitialSection::Constant { h, gamma, .. } => {
                require(*h >= 0.0, "initial", "h", || {
                    format!("must be nonnegative, got {h}")
                })?;
                require(*gamma >= 0.0, "initial", "gamma", || {
                    format!("must be nonnegative, got {gamma}")
                })?;
            }
            InitialSection::Cosine {
                h_mean,
                h_amp,
                gamma_mean,
                gamma_amp,
                mode,
                ..
            } => {
                require(h_amp.abs() < *h_mean, "initial", "h_amp", || {
                    format!("|h_amp| = {} must be below h_mean = {h_mean}", h_amp.abs())
                })?;
                require(
                    gamma_amp.abs() < *gamma_mean,
                    "initial",
                    "gamma_amp",
                    || {
                        format!(
                            "|gamma_amp| = {} must be below gamma_mean = {gamma_mean}",
                            gamma_amp.abs()
                        )
                    },
                )?;
                require(*mode >= 1, "initial", "mode", || {
                    format!("must be a positive integer, got {mode}")
                })?;
            }
            InitialSection::File { .. } => {}
        }
        let c = &self.control;
        require(
            c.t_end.is_finite() && c.t_end > 0.0,
            "control",
            "t_end",
            || format!("must be positive, got {}", c.t_end),
        )?;
        require(c.dt_max_factor > 0.0, "control", "dt_max_factor", || {
            format!("must be positive, got {}", c.dt_max_factor)
        })?;
        require(c.dt_min > 0.0, "control", "dt_min", || {
            format!("must be positive, got {}", c.dt_min)
        })?;
        let dx = g.length / g.n_cells as f64;
        let dt_max = c.dt_max_factor * dx * dx;
        if let Some(dt0) = c.dt0 {
            require(dt0 >= c.dt_min && dt0 <= dt_max, "control", "dt0", || {
                format!(
                    "must lie in [dt_min, dt_max] = [{}, {dt_max}], got {dt0}",
                    c.dt_min
                )
            })?;
        }
        require(c.dt_min <= dt_max, "control", "dt_min", || {
            format!("exceeds dt_max = {dt_max}")
        })?;
        if let Some(every) = self.output.snapshot_every {
            require(every > 0.0, "output", "snapshot_every", || {
                format!("must be positive, got {every}")
            })?;
        }
        require(
            self.output.ledger_every >= 1,
            "output",
            "ledger_every",
            || "must be at least 1".into(),
        )?;
        let s = &self.sweep;
        require(s.eps.len() >= 3, "sweep", "eps", || {
            format!(
                "need at least 3 eps values to estimate rates, got {}",
                s.eps.len()
            )
        })?;
        require(
            s.eps.windows(2).all(|w| w[0] > w[1]) && s.eps.iter().all(|&e| e > 0.0 && e < 1.0),
            "sweep",
            "eps",
            || "must be strictly decreasing inside (0, 1)".into(),
        )?;
        require(s.t_end > 0.0, "sweep", "t_end", || {
            "must be positive".into()
        })?;
        require(s.samples >= 1, "sweep", "samples", || {
            "must be at least 1".into()
        })?;
        let mm = &self.mms;
        require(mm.spatial_cells.len() >= 2, "mms", "spatial_cells", || {
            "need at least two grids".into()
        })?;
        require(mm.time_steps.len() >= 2, "mms", "time_steps", || {
            "need at least two steps".into()
        })?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n_cells, self.grid.length)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.model.g,
            self.model.d,
            self.sigma,
            self.model.eps,
            self.model.eta1,
        )
    }

    pub fn control(&self) -> Result<StepControl> {
        let grid = self.grid()?;
        let dx2 = grid.dx() * grid.dx();
        let dt_max = self.control.dt_max_factor * dx2;
        let mut c = StepControl::new(
            self.control.dt0.unwrap_or(dx2.min(dt_max)),
            self.control.dt_min,
            dt_max,
        )?;
        c.max_rejects = self.control.max_rejects;
        Ok(c)
    }

    /// Unlifted initial fields (for files: the stored fields).
    pub fn initial_fields(&self, base: &Path) -> Result<(Field, Field)> {
        let grid = self.grid()?;
        match &self.initial {
            InitialSection::Constant { h, gamma, .. } => {
                Ok((Field::constant(grid, *h), Field::constant(grid, *gamma)))
            }
            InitialSection::Cosine {
                h_mean,
                h_amp,
                gamma_mean,
                gamma_amp,
                mode,
                ..
            } => {
                let k = *mode as f64 * std::f64::consts::PI / grid.length();
                Ok((
                    Field::from_fn(grid, |x| h_mean + h_amp * (k * x).cos()),
                    Field::from_fn(grid, |x| gamma_mean + gamma_amp * (k * x).cos()),
                ))
            }
            InitialSection::File { path, .. } => read_state_csv(&base.join(path), grid),
        }
    }

    pub fn lift(&self) -> bool {
        match &self.initial {
            InitialSection::Constant { lift, .. } | InitialSection::Cosine { lift, .. } => {
                lift.unwrap_or(true)
            }
            InitialSection::File { lift, .. } => lift.unwrap_or(false),
        }
    }

    /// Initial state, lifted for regularized runs when requested.
    pub fn initial_state(&self, base: &Path) -> Result<State> {
        let (h, gamma) = self.initial_fields(base)?;
        if self.model.scheme == Scheme::Regularized && self.lift() {
            State::lifted(0.0, &h, &gamma, self.model.eps)
        } else {
            State::new(0.0, h, gamma)
        }
    }

    /// Output times: multiples of `snapshot_every` (default `t_end / 10`) and `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let t_end = self.control.t_end;
        let every = self.output.snapshot_every.unwrap_or(t_end / 10.0);
        let mut v = vec![];
        let mut k = 0u64;
        loop {
            let t = k as f64 * every;
            if t >= t_end * (1.0 - 1e-12) {
                break;
            }
            v.push(t);
            k += 1;
        }
        v.push(t_end);
        v
    }
}

/// Reads `h` and `gamma` columns of a CSV file with a header row.
pub fn read_state_csv(path: &Path, grid: Grid) -> Result<(Field, Field)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Param(format!("{}: no `{name}` column", path.display())))
    };
    let (ih, ig) = (col("h")?, col("gamma")?);
    let mut h = vec![];
    let mut g = vec![];
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Param(format!("{}: {e}", path.display())))
        };
        h.push(parse(ih)?);
        g.push(parse(ig)?);
    }
    Ok((Field::new(grid, h)?, Field::new(grid, g)?))
}
