use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::{RealField, TorusGrid};

/// One tensor-product trigonometric term
/// `amplitude * prod_j trig_j(2 pi k_j x_j / L_j)`, where `trig_j` is `sin`
/// when `sin[j]` is set and `cos` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub amplitude: f64,
    #[serde(default)]
    pub k: [i32; 4],
    #[serde(default)]
    pub sin: [bool; 4],
}

/// A constant plus a finite sum of [`TrigTerm`]s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigTerm {
    pub fn cos(amplitude: f64, k: [i32; 4]) -> Self {
        Self {
            amplitude,
            k,
            sin: [false; 4],
        }
    }

    pub fn sin(amplitude: f64, k: [i32; 4], sin: [bool; 4]) -> Self {
        Self { amplitude, k, sin }
    }

    pub fn eval(&self, x: [f64; 4], periods: [f64; 4]) -> f64 {
        let mut v = self.amplitude;
        for j in 0..4 {
            let arg = 2.0 * PI * self.k[j] as f64 * x[j] / periods[j];
            v *= if self.sin[j] { arg.sin() } else { arg.cos() };
        }
        v
    }

    /// Axes on which the term is not constant.
    pub fn active_axes(&self) -> [bool; 4] {
        std::array::from_fn(|j| self.k[j] != 0 || self.sin[j])
    }
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn with(mut self, term: TrigTerm) -> Self {
        self.terms.push(term);
        self
    }

    pub fn eval(&self, x: [f64; 4], periods: [f64; 4]) -> f64 {
        self.constant + self.terms.iter().map(|t| t.eval(x, periods)).sum::<f64>()
    }

    pub fn sample(&self, grid: TorusGrid) -> RealField {
        let periods = grid.periods();
        RealField::from_fn(grid, |x| self.eval(x, periods))
    }

    /// True when no term depends on the given factor's coordinates.
    pub fn independent_of(&self, axes: [usize; 2]) -> bool {
        self.terms.iter().all(|t| {
            let a = t.active_axes();
            t.amplitude == 0.0 || !(a[axes[0]] || a[axes[1]])
        })
    }

    /// Largest absolute wavenumber on any axis.
    pub fn max_wavenumber(&self) -> u32 {
        self.terms
            .iter()
            .flat_map(|t| t.k.iter().map(|k| k.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_term_eval() {
        let t = TrigTerm::sin(2.0, [1, 0, 1, 0], [true, false, false, false]);
        let x = [0.25, 0.3, 0.0, 0.7];
        approx::assert_abs_diff_eq!(t.eval(x, [1.0; 4]), 2.0, epsilon = 1e-15);
        assert_eq!(t.active_axes(), [true, false, true, false]);
    }

    #[test]
    fn factor_independence() {
        let s = TrigSeries::constant(1.0).with(TrigTerm::cos(0.3, [1, 0, 0, 0]));
        assert!(s.independent_of([2, 3]));
        assert!(!s.independent_of([0, 1]));
    }
}
