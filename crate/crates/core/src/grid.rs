//! Cell-centred rectangular grids with homogeneous Neumann boundaries.
//!
//! Values are stored row-major with the x index running fastest, so cell
//! `(i, j)` lives at `j * nx + i`. In 1D the second axis is a single cell
//! and does not contribute to the measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDescriptor", into = "GridDescriptor")]
pub struct Grid {
    dims: usize,
    extents: [f64; 2],
    cells: [usize; 2],
}

/// JSON shape of a grid: `{"dims": 2, "extents": [1.0, 1.0], "cells": [64, 64]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub dims: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl TryFrom<GridDescriptor> for Grid {
    type Error = Error;

    fn try_from(d: GridDescriptor) -> Result<Self> {
        if d.extents.len() != d.dims || d.cells.len() != d.dims {
            return Err(Error::InvalidGrid(format!(
                "dims = {} but {} extents and {} cell counts given",
                d.dims,
                d.extents.len(),
                d.cells.len()
            )));
        }
        match d.dims {
            1 => Grid::new_1d(d.extents[0], d.cells[0]),
            2 => Grid::new_2d([d.extents[0], d.extents[1]], [d.cells[0], d.cells[1]]),
            n => Err(Error::InvalidGrid(format!("dims must be 1 or 2, got {n}"))),
        }
    }
}

impl From<Grid> for GridDescriptor {
    fn from(g: Grid) -> Self {
        GridDescriptor {
            dims: g.dims,
            extents: g.extents[..g.dims].to_vec(),
            cells: g.cells[..g.dims].to_vec(),
        }
    }
}

fn check_axis(extent: f64, cells: usize) -> Result<()> {
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "extent must be finite and positive, got {extent}"
        )));
    }
    if cells < MIN_CELLS {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_CELLS} cells per axis, got {cells}"
        )));
    }
    Ok(())
}

impl Grid {
    pub fn new_1d(extent: f64, cells: usize) -> Result<Self> {
        check_axis(extent, cells)?;
        Ok(Grid {
            dims: 1,
            extents: [extent, 1.0],
            cells: [cells, 1],
        })
    }

    pub fn new_2d(extents: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        check_axis(extents[0], cells[0])?;
        check_axis(extents[1], cells[1])?;
        Ok(Grid {
            dims: 2,
            extents,
            cells,
        })
    }

    /// Unit interval or unit square with `n` cells per axis.
    pub fn unit(dims: usize, n: usize) -> Result<Self> {
        match dims {
            1 => Grid::new_1d(1.0, n),
            2 => Grid::new_2d([1.0, 1.0], [n, n]),
            d => Err(Error::InvalidGrid(format!("dims must be 1 or 2, got {d}"))),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        match self.dims {
            1 => self.spacing(0),
            _ => self.spacing(0) * self.spacing(1),
        }
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        match self.dims {
            1 => self.extents[0],
            _ => self.extents[0] * self.extents[1],
        }
    }

    /// Cell centre of the flat index `idx`. The second coordinate is 0 in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let nx = self.cells[0];
        let (i, j) = (idx % nx, idx / nx);
        let x = (i as f64 + 0.5) * self.spacing(0);
        let y = if self.dims == 2 {
            (j as f64 + 0.5) * self.spacing(1)
        } else {
            0.0
        };
        [x, y]
    }

    /// Refined copy with twice as many cells per axis.
    pub fn refined(&self) -> Grid {
        let mut g = *self;
        g.cells[0] *= 2;
        if g.dims == 2 {
            g.cells[1] *= 2;
        }
        g
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values)
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

    /// ∫_Ω f by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.measure()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Writes the ghost-cell Neumann Laplacian of `f` into `out`.
pub(crate) fn apply_laplacian(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let [nx, ny] = grid.cells;
    let ihx2 = 1.0 / (grid.spacing(0) * grid.spacing(0));
    // Reflected ghosts copy the boundary value, so the missing neighbour
    // simply drops out of the stencil.
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        let orow = &mut out[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let c = row[i];
            let mut acc = 0.0;
            if i > 0 {
                acc += row[i - 1] - c;
            }
            if i + 1 < nx {
                acc += row[i + 1] - c;
            }
            orow[i] = acc * ihx2;
        }
    }
    if grid.dims == 2 {
        let ihy2 = 1.0 / (grid.spacing(1) * grid.spacing(1));
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let c = f[k];
                let mut acc = 0.0;
                if j > 0 {
                    acc += f[k - nx] - c;
                }
                if j + 1 < ny {
                    acc += f[k + nx] - c;
                }
                out[k] += acc * ihy2;
            }
        }
    }
}

/// Second-order Neumann Laplacian with ghost-cell reflection (zero normal flux).
pub fn neumann_laplacian(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    apply_laplacian(&f.grid, &f.values, &mut out);
    ScalarField::from_vec_unchecked(f.grid, out)
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param("p", format!("need p >= 1 or infinity, got {p}")));
    }
    Ok(())
}

/// Sum of |f_i|^p times the cell volume, i.e. ‖f‖_p^p for finite p.
pub(crate) fn lp_power(grid: &Grid, values: &[f64], p: f64) -> f64 {
    let s: f64 = if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    s * grid.cell_volume()
}

pub(crate) fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// ‖f‖_{L^p(Ω)}; pass `f64::INFINITY` for the sup norm.
pub fn lp_norm_space(f: &ScalarField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(sup_abs(&f.values));
    }
    Ok(lp_power(&f.grid, &f.values, p).powf(1.0 / p))
}

/// Time samples of one or more species fields on a common grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    species: usize,
    times: Vec<f64>,
    snapshots: Vec<Vec<ScalarField>>,
}

impl Trajectory {
    pub fn new(grid: Grid, species: usize) -> Self {
        Trajectory {
            grid,
            species,
            times: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Appends a snapshot. The first time must be 0 and times must increase.
    pub fn push(&mut self, t: f64, fields: Vec<ScalarField>) -> Result<()> {
        if fields.len() != self.species {
            return Err(Error::param(
                "fields",
                format!("expected {} species, got {}", self.species, fields.len()),
            ));
        }
        if fields.iter().any(|f| f.grid != self.grid) {
            return Err(Error::InvalidGrid("snapshot on a different grid".into()));
        }
        match self.times.last() {
            None if t != 0.0 => {
                return Err(Error::param("t", format!("first sample must be at t = 0, got {t}")))
            }
            Some(&last) if t <= last => {
                return Err(Error::param(
                    "t",
                    format!("times must increase strictly ({t} after {last})"),
                ))
            }
            _ => {}
        }
        self.times.push(t);
        self.snapshots.push(fields);
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn snapshot(&self, k: usize) -> &[ScalarField] {
        &self.snapshots[k]
    }

    pub fn field(&self, k: usize, species: usize) -> &ScalarField {
        &self.snapshots[k][species]
    }

    pub fn last(&self) -> Option<&[ScalarField]> {
        self.snapshots.last().map(|s| s.as_slice())
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// ‖u‖_{L^p(Ω_T)} with composite trapezoidal quadrature in time.
pub fn lp_norm_spacetime(tr: &Trajectory, species: usize, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if tr.len() < 2 {
        return Err(Error::param(
            "trajectory",
            "need at least two samples for a positive-measure time interval",
        ));
    }
    if species >= tr.species {
        return Err(Error::param("species", format!("index {species} out of range")));
    }
    if p.is_infinite() {
        return Ok(tr
            .snapshots
            .iter()
            .map(|s| sup_abs(&s[species].values))
            .fold(0.0, f64::max));
    }
    let powers: Vec<f64> = tr
        .snapshots
        .iter()
        .map(|s| lp_power(&tr.grid, &s[species].values, p))
        .collect();
    Ok(trapezoid(&tr.times, &powers).powf(1.0 / p))
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}
