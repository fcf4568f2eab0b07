use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{parallel, TorusGrid};
use crate::error::{Error, Result};

/// Real samples on a [`TorusGrid`]. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: TorusGrid,
    data: Vec<f64>,
}

/// Complex samples on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub sup_norm: f64,
    pub mean: f64,
}

/// Min, max, sup-norm and mean of raw samples.
pub fn stats(data: &[f64]) -> Result<FieldStats> {
    if data.is_empty() {
        return Err(Error::InvalidField("empty field".into()));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!(
            "non-finite sample {} at index {i}",
            data[i]
        )));
    }
    Ok(stats_unchecked(data))
}

fn stats_unchecked(data: &[f64]) -> FieldStats {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in data {
        min = min.min(v);
        max = max.max(v);
    }
    FieldStats {
        min,
        max,
        sup_norm: min.abs().max(max.abs()),
        mean: sum(data) / data.len() as f64,
    }
}

fn sum(data: &[f64]) -> f64 {
    if parallel() {
        data.par_iter().sum()
    } else {
        data.iter().sum()
    }
}

impl RealField {
    pub fn new(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} samples for a grid of {} points",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite sample {} at index {i}",
                data[i]
            )));
        }
        Ok(Self { grid, data })
    }

    /// Skips the finiteness scan. Callers guarantee the length.
    pub(crate) fn from_vec(grid: TorusGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Samples `f(x1, x2, x3, x4)` at the grid points.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 4]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn stats(&self) -> FieldStats {
        stats_unchecked(&self.data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        sum(&self.data) / self.data.len() as f64
    }

    /// Integral over the torus (rectangle rule, spectrally accurate).
    pub fn integral(&self) -> f64 {
        sum(&self.data) * self.grid.cell_volume()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let data = if parallel() {
            self.data.par_iter().map(|&v| f(v)).collect()
        } else {
            self.data.iter().map(|&v| f(v)).collect()
        };
        Self::from_vec(self.grid, data)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = if parallel() {
            self.data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect()
        } else {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect()
        };
        Self::from_vec(self.grid, data)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn shift(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_vec(
            self.grid,
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }
}

impl ComplexField {
    pub(crate) fn from_vec(grid: TorusGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn new(grid: TorusGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} samples for a grid of {} points",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn re(&self) -> RealField {
        RealField::from_vec(self.grid, self.data.iter().map(|c| c.re).collect())
    }

    pub fn im(&self) -> RealField {
        RealField::from_vec(self.grid, self.data.iter().map(|c| c.im).collect())
    }

    pub fn norm_sqr(&self) -> RealField {
        RealField::from_vec(self.grid, self.data.iter().map(|c| c.norm_sqr()).collect())
    }

    pub fn conj(&self) -> Self {
        Self::from_vec(self.grid, self.data.iter().map(|c| c.conj()).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.norm()))
    }
}
