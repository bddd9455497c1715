//! Uniform cell-centered mesh on `(0, L)` and the discrete calculus built on it.
//!
//! Cells are indexed `0..n`, faces `0..=n`. Face `k` sits between cells `k-1`
//! and `k`; faces `0` and `n` are the domain boundary. Homogeneous Neumann
//! conditions enter only through zero boundary fluxes, so every divergence
//! telescopes and total mass is a structural invariant.

use crate::error::{Error, Result};

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n_cells: usize,
    length: f64,
    dx: f64,
}

impl Grid {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < MIN_CELLS {
            return Err(Error::Grid(format!(
                "need at least {MIN_CELLS} cells, got {n_cells}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Grid(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self {
            n_cells,
            length,
            dx: length / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_faces(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Center of cell `i`, `(i + 1/2) dx`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Position of face `k`.
    pub fn face(&self, k: usize) -> f64 {
        k as f64 * self.dx
    }
}

/// Per-cell samples of a scalar on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps `values`, rejecting a length mismatch or non-finite entries.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Shape {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field",
                index,
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|i| f(grid.center(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `f` cell by cell.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral `sum_i f_i dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Values living on the `n + 1` faces of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: Grid,
    values: Vec<f64>,
}

impl FaceField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_faces() {
            return Err(Error::Shape {
                expected: grid.n_faces(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_faces()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `sum_k f_k^2 dx` over interior faces: the discrete `L2` norm squared
    /// of a flux-like quantity.
    pub fn l2_squared(&self) -> f64 {
        let n = self.grid.n_cells();
        self.values[1..n].iter().map(|v| v * v).sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for FaceField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Difference quotient at each interior face, exactly zero on both boundary faces.
pub fn face_gradient(f: &Field) -> FaceField {
    let grid = *f.grid();
    let n = grid.n_cells();
    let inv_dx = 1.0 / grid.dx();
    let mut values = vec![0.0; n + 1];
    for k in 1..n {
        values[k] = (f.values[k] - f.values[k - 1]) * inv_dx;
    }
    FaceField { grid, values }
}

/// Conservative divergence `(F_{i+1} - F_i) / dx` of a face flux.
///
/// The boundary entries must be exactly zero; anything else would leak mass
/// through the no-flux walls.
pub fn flux_divergence(flux: &FaceField) -> Result<Field> {
    let grid = *flux.grid();
    let n = grid.n_cells();
    for face in [0, n] {
        if flux.values[face] != 0.0 {
            return Err(Error::BoundaryFlux {
                face,
                value: flux.values[face],
            });
        }
    }
    let inv_dx = 1.0 / grid.dx();
    let values = (0..n)
        .map(|i| (flux.values[i + 1] - flux.values[i]) * inv_dx)
        .collect();
    Ok(Field::from_vec_unchecked(grid, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];
}

pub fn discrete_norm(f: &Field, kind: Norm) -> f64 {
    let dx = f.grid().dx();
    match kind {
        Norm::L1 => f.values.iter().map(|v| v.abs()).sum::<f64>() * dx,
        Norm::L2 => (f.values.iter().map(|v| v * v).sum::<f64>() * dx).sqrt(),
        Norm::Linf => f.values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Trapezoid rule over `(t_k, v_k)` samples. Fewer than two samples give `0`.
pub fn time_integral(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}
