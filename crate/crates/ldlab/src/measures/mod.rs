//! Finite discrete measures, space-time occupation measures, and the exact
//! bounded-Lipschitz distance between them.
//!
//! `DiscreteMeasure` carries empirical measures of paths and steering
//! targets. `SpaceTimeMeasure` carries occupation measures on state x time
//! with Lebesgue time marginal: cells tile `[0, T]` and each cell's slice is
//! a probability measure, so the measure of `R^d x [0, t]` at a cell
//! boundary is `t`.

mod dbl;

pub use dbl::{
    dbl_distance, dbl_distance_with_mode, dbl_space_time, dbl_to_dirac, dbl_two_diracs,
    wasserstein1, DblMode,
};

use crate::error::{Error, Result};
use crate::sde::Path;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Tolerance for "is a probability measure".
pub const PROB_TOL: f64 = 1e-9;

/// Finitely supported weighted measure on R^dim.
///
/// Serializes as `{"dim": d, "atoms": [[[x1, ..., xd], w], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub dim: usize,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl DiscreteMeasure {
    /// Checked constructor: every weight nonnegative and finite, every
    /// location finite with the declared dimension.
    pub fn new(dim: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("measure dimension must be positive"));
        }
        for (loc, w) in &atoms {
            if loc.len() != dim {
                return Err(Error::invalid(format!(
                    "atom location has dimension {}, expected {}",
                    loc.len(),
                    dim
                )));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::invalid(format!("atom weight {w} is not a finite nonnegative real")));
            }
            if loc.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("atom location has a non-finite coordinate"));
            }
        }
        Ok(DiscreteMeasure { dim, atoms })
    }

    /// Point mass at `loc`.
    pub fn delta(loc: Vec<f64>) -> Self {
        let dim = loc.len();
        DiscreteMeasure {
            dim,
            atoms: vec![(loc, 1.0)],
        }
    }

    /// Convenience constructor for one-dimensional measures.
    pub fn from_1d(pairs: &[(f64, f64)]) -> Self {
        DiscreteMeasure {
            dim: 1,
            atoms: pairs.iter().map(|&(x, w)| (vec![x], w)).collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROB_TOL
    }

    /// Rescales weights to total mass one.
    pub fn normalize(&self) -> Result<Self> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::invalid("cannot normalize a zero-mass measure"));
        }
        Ok(DiscreteMeasure {
            dim: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|(loc, w)| (loc.clone(), w / m))
                .collect(),
        })
    }

    /// Merges exactly coincident atoms and drops zero-weight ones. The result
    /// is sorted lexicographically by location, so equal measures have equal
    /// representations.
    pub fn merged(&self) -> Self {
        let mut atoms: Vec<(Vec<f64>, f64)> = self
            .atoms
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .cloned()
            .collect();
        atoms.sort_by(|a, b| cmp_loc(&a.0, &b.0));
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(atoms.len());
        for (loc, w) in atoms {
            match merged.last_mut() {
                Some((last, lw)) if *last == loc => *lw += w,
                _ => merged.push((loc, w)),
            }
        }
        DiscreteMeasure {
            dim: self.dim,
            atoms: merged,
        }
    }

    /// Mass-weighted mean location. Errors on zero mass.
    pub fn mean(&self) -> Result<Vec<f64>> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::invalid("mean of a zero-mass measure"));
        }
        let mut out = vec![0.0; self.dim];
        for (loc, w) in &self.atoms {
            for (o, x) in out.iter_mut().zip(loc) {
                *o += w * x;
            }
        }
        for o in &mut out {
            *o /= m;
        }
        Ok(out)
    }

    /// Bins atoms to the lattice `h * Z^dim` (nearest lattice point). Each
    /// atom moves by at most `h * sqrt(dim) / 2`, which bounds the induced
    /// bounded-Lipschitz perturbation; the bound is returned with the result.
    pub fn coarsen(&self, h: f64) -> Result<Coarsened> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("coarsening resolution must be positive"));
        }
        let mut bins: HashMap<Vec<i64>, f64> = HashMap::new();
        for (loc, w) in &self.atoms {
            let key: Vec<i64> = loc.iter().map(|x| (x / h).round() as i64).collect();
            *bins.entry(key).or_insert(0.0) += w;
        }
        let mut atoms: Vec<(Vec<f64>, f64)> = bins
            .into_iter()
            .map(|(k, w)| (k.iter().map(|&i| i as f64 * h).collect(), w))
            .collect();
        atoms.sort_by(|a, b| cmp_loc(&a.0, &b.0));
        Ok(Coarsened {
            measure: DiscreteMeasure {
                dim: self.dim,
                atoms,
            },
            dbl_error_bound: 0.5 * h * (self.dim as f64).sqrt(),
        })
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    /// Total weight of atoms within Euclidean `radius` of `loc`.
    pub fn mass_within(&self, loc: &[f64], radius: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(z, _)| {
                z.iter()
                    .zip(loc)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    <= radius
            })
            .map(|(_, w)| w)
            .sum()
    }

    /// Re-runs the constructor checks. Needed for values that bypassed
    /// [`DiscreteMeasure::new`], e.g. deserialized ones.
    pub fn validate(&self) -> Result<()> {
        DiscreteMeasure::new(self.dim, self.atoms.clone()).map(|_| ())
    }
}

/// A coarsened measure together with the worst-case bounded-Lipschitz
/// perturbation the binning introduced.
#[derive(Clone, Debug)]
pub struct Coarsened {
    pub measure: DiscreteMeasure,
    pub dbl_error_bound: f64,
}

fn cmp_loc(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Occupation measure of a path: one atom per left grid point, weighted by
/// the step length (divided by the total duration when `normalize` is set).
pub fn from_path(path: &Path, normalize: bool) -> Result<DiscreteMeasure> {
    let n = path.grid.n;
    if n < 1 {
        return Err(Error::invalid("occupation measure needs a path with at least 2 grid points"));
    }
    let w = if normalize {
        1.0 / n as f64
    } else {
        path.grid.dt()
    };
    let atoms = (0..n).map(|j| (path.state(j).to_vec(), w)).collect();
    DiscreteMeasure::new(path.dim, atoms)
}

/// Second moment `sum w_i |z_i|^2 / mass`. Errors on zero mass.
pub fn second_moment(mu: &DiscreteMeasure) -> Result<f64> {
    let m = mu.total_mass();
    if m <= 0.0 {
        return Err(Error::invalid("second moment of a zero-mass measure"));
    }
    let s: f64 = mu
        .atoms
        .iter()
        .map(|(loc, w)| w * loc.iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(s / m)
}

/// One cell of a space-time measure: the slice (a probability measure on
/// R^dim) held constant over the time interval `[a, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub interval: (f64, f64),
    pub slice: DiscreteMeasure,
}

/// Measure on R^dim x [0, T] with Lebesgue time marginal.
///
/// Serializes as `{"dim": d, "horizon": T, "cells": [{"interval": [a, b],
/// "slice": {...}}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeMeasure {
    pub dim: usize,
    pub horizon: f64,
    pub cells: Vec<Cell>,
}

impl SpaceTimeMeasure {
    /// Checked constructor: cells must tile `[0, horizon]` in order without
    /// gaps or overlaps, and every slice must be a probability measure of
    /// the declared dimension.
    pub fn new(dim: usize, horizon: f64, cells: Vec<Cell>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("horizon must be a positive real"));
        }
        if cells.is_empty() {
            return Err(Error::invalid("space-time measure needs at least one cell"));
        }
        let tol = 1e-9 * horizon.max(1.0);
        let mut cursor = 0.0;
        for cell in &cells {
            let (a, b) = cell.interval;
            if (a - cursor).abs() > tol || b <= a {
                return Err(Error::invalid(format!(
                    "cells do not tile the horizon: got interval ({a}, {b}) after {cursor}"
                )));
            }
            if cell.slice.dim != dim {
                return Err(Error::invalid("slice dimension mismatch"));
            }
            if !cell.slice.is_probability() {
                return Err(Error::invalid(format!(
                    "slice over ({a}, {b}) has mass {}, expected 1",
                    cell.slice.total_mass()
                )));
            }
            cursor = b;
        }
        if (cursor - horizon).abs() > tol {
            return Err(Error::invalid(format!(
                "cells end at {cursor}, horizon is {horizon}"
            )));
        }
        Ok(SpaceTimeMeasure { dim, horizon, cells })
    }

    /// Single cell covering the whole horizon.
    pub fn constant(horizon: f64, slice: DiscreteMeasure) -> Result<Self> {
        let dim = slice.dim;
        SpaceTimeMeasure::new(
            dim,
            horizon,
            vec![Cell {
                interval: (0.0, horizon),
                slice,
            }],
        )
    }

    /// The slice governing time `t`. Cells are left-closed: `t` in `[a, b)`
    /// maps to the cell `[a, b)`; `t = T` maps to the last cell.
    pub fn slice_at(&self, t: f64) -> &DiscreteMeasure {
        let mut lo = 0usize;
        let mut hi = self.cells.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cells[mid].interval.1 <= t {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        &self.cells[lo].slice
    }

    /// Time-averaged spatial marginal: slices mixed with weight proportional
    /// to cell length, normalized to a probability measure.
    pub fn space_marginal(&self) -> DiscreteMeasure {
        let mut atoms = Vec::new();
        for cell in &self.cells {
            let len = cell.interval.1 - cell.interval.0;
            for (loc, w) in &cell.slice.atoms {
                atoms.push((loc.clone(), w * len / self.horizon));
            }
        }
        DiscreteMeasure {
            dim: self.dim,
            atoms,
        }
        .merged()
    }

    /// Re-runs the constructor checks, for deserialized values.
    pub fn validate(&self) -> Result<()> {
        SpaceTimeMeasure::new(self.dim, self.horizon, self.cells.clone()).map(|_| ())
    }

    /// Mass of `R^dim x [0, t]`.
    pub fn mass_up_to(&self, t: f64) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                let (a, b) = c.interval;
                (t.min(b) - a).max(0.0)
            })
            .sum()
    }
}

/// Occupation measure on state x time: one cell per grid step, slice a point
/// mass at the step's left state. The time marginal is Lebesgue by
/// construction.
pub fn space_time_from_path(path: &Path) -> Result<SpaceTimeMeasure> {
    let n = path.grid.n;
    if n < 1 {
        return Err(Error::invalid("space-time measure needs a path with at least 2 grid points"));
    }
    if (path.grid.start).abs() > 1e-12 {
        return Err(Error::invalid("space-time occupation measures start at t = 0"));
    }
    let dt = path.grid.dt();
    let cells = (0..n)
        .map(|j| Cell {
            interval: (j as f64 * dt, (j + 1) as f64 * dt),
            slice: DiscreteMeasure::delta(path.state(j).to_vec()),
        })
        .collect();
    SpaceTimeMeasure::new(path.dim, path.grid.horizon, cells)
}

/// Streaming builder for the occupation measure of a long run: states are
/// binned to the lattice `h * Z^dim` as they arrive, so the path never needs
/// to be stored.
pub struct OccupationAccumulator {
    dim: usize,
    h: f64,
    bins: HashMap<Vec<i64>, f64>,
}

impl OccupationAccumulator {
    pub fn new(dim: usize, h: f64) -> Self {
        OccupationAccumulator {
            dim,
            h,
            bins: HashMap::new(),
        }
    }

    pub fn add(&mut self, state: &[f64], weight: f64) {
        let key: Vec<i64> = state.iter().map(|x| (x / self.h).round() as i64).collect();
        *self.bins.entry(key).or_insert(0.0) += weight;
    }

    pub fn finish(self, normalize: bool) -> Result<DiscreteMeasure> {
        let mut atoms: Vec<(Vec<f64>, f64)> = self
            .bins
            .into_iter()
            .map(|(k, w)| {
                (
                    k.iter().map(|&i| i as f64 * self.h).collect::<Vec<f64>>(),
                    w,
                )
            })
            .collect();
        atoms.sort_by(|a, b| cmp_loc(&a.0, &b.0));
        let mu = DiscreteMeasure::new(self.dim, atoms)?;
        if normalize {
            mu.normalize()
        } else {
            Ok(mu)
        }
    }
}

/// Streaming builder for space-time occupation measures of long runs: time
/// is split into `n_cells` equal cells and states are binned spatially with
/// resolution `h`. Slices are normalized to probability measures on finish.
pub struct SpaceTimeAccumulator {
    dim: usize,
    horizon: f64,
    h: f64,
    n_cells: usize,
    bins: Vec<HashMap<Vec<i64>, f64>>,
}

impl SpaceTimeAccumulator {
    pub fn new(dim: usize, horizon: f64, n_cells: usize, h: f64) -> Self {
        SpaceTimeAccumulator {
            dim,
            horizon,
            h,
            n_cells,
            bins: (0..n_cells).map(|_| HashMap::new()).collect(),
        }
    }

    pub fn add(&mut self, t: f64, state: &[f64], dt: f64) {
        let idx = ((t / self.horizon * self.n_cells as f64) as usize).min(self.n_cells - 1);
        let key: Vec<i64> = state.iter().map(|x| (x / self.h).round() as i64).collect();
        *self.bins[idx].entry(key).or_insert(0.0) += dt;
    }

    pub fn finish(self) -> Result<SpaceTimeMeasure> {
        let cell_len = self.horizon / self.n_cells as f64;
        let mut cells = Vec::with_capacity(self.n_cells);
        for (i, bin) in self.bins.into_iter().enumerate() {
            if bin.is_empty() {
                return Err(Error::invalid(format!(
                    "space-time accumulator cell {i} received no mass"
                )));
            }
            let mut atoms: Vec<(Vec<f64>, f64)> = bin
                .into_iter()
                .map(|(k, w)| {
                    (
                        k.iter().map(|&q| q as f64 * self.h).collect::<Vec<f64>>(),
                        w,
                    )
                })
                .collect();
            atoms.sort_by(|a, b| cmp_loc(&a.0, &b.0));
            let slice = DiscreteMeasure::new(self.dim, atoms)?.normalize()?;
            cells.push(Cell {
                interval: (i as f64 * cell_len, (i + 1) as f64 * cell_len),
                slice,
            });
        }
        SpaceTimeMeasure::new(self.dim, self.horizon, cells)
    }
}
