//! Periodic 4D grids, real and complex fields, spectral derivatives and
//! the on-disk field format.

mod field;
pub mod io;
mod spectral;

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use field::{stats, ComplexField, FieldStats, RealField};
pub use spectral::{poisson_solve_factor, Deriv, Factor, Spectrum};

static PARALLEL: AtomicBool = AtomicBool::new(false);

/// Selects between the deterministic (sequential) kernels and the rayon
/// kernels. Deterministic is the default; reductions in parallel mode may
/// differ in the last bits.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on, Ordering::Relaxed);
}

pub fn parallel() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Uniform grid on the torus `R^4 / (L1 Z x L2 Z x L3 Z x L4 Z)`.
///
/// Storage is row-major with the x4 index fastest. Coordinates are
/// `z = x1 + i x2` and `w = x3 + i x4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dims: [usize; 4],
    periods: [f64; 4],
}

impl TorusGrid {
    pub fn new(dims: [usize; 4], periods: [f64; 4]) -> Result<Self> {
        for (axis, &n) in dims.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::Config(format!(
                    "grid dimension {n} on axis {} must be a power of two >= 8",
                    axis + 1
                )));
            }
        }
        for (axis, &l) in periods.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!(
                    "period {l} on axis {} must be positive",
                    axis + 1
                )));
            }
        }
        Ok(Self { dims, periods })
    }

    /// `n^4` points on the unit torus.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 4], [1.0; 4])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn periods(&self) -> [f64; 4] {
        self.periods
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> [f64; 4] {
        std::array::from_fn(|a| self.periods[a] / self.dims[a] as f64)
    }

    /// Product of the four spacings, the quadrature weight of one point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn strides(&self) -> [usize; 4] {
        let [_, n1, n2, n3] = self.dims;
        [n1 * n2 * n3, n2 * n3, n3, 1]
    }

    pub fn index(&self, i: [usize; 4]) -> usize {
        let s = self.strides();
        i[0] * s[0] + i[1] * s[1] + i[2] * s[2] + i[3]
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for a in (0..4).rev() {
            out[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.periods[axis] / self.dims[axis] as f64
    }

    pub fn point(&self, flat: usize) -> [f64; 4] {
        let i = self.multi_index(flat);
        std::array::from_fn(|a| self.coord(a, i[a]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims_and_periods() {
        assert!(TorusGrid::new([12, 16, 16, 16], [1.0; 4]).is_err());
        assert!(TorusGrid::new([4, 16, 16, 16], [1.0; 4]).is_err());
        assert!(TorusGrid::new([8; 4], [1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(TorusGrid::new([8; 4], [1.0, 2.0, 1.0, 1.0]).is_ok());
    }

    #[test]
    fn index_roundtrip_x4_fastest() {
        let g = TorusGrid::new([8, 16, 8, 32], [1.0; 4]).unwrap();
        assert_eq!(g.index([0, 0, 0, 1]), 1);
        assert_eq!(g.index([0, 0, 1, 0]), 32);
        for flat in [0, 1, 77, 1000, g.len() - 1] {
            assert_eq!(g.index(g.multi_index(flat)), flat);
        }
    }
}
