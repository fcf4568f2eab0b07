//! Pointwise complex arithmetic on grid data, with spectral derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::grid::{ComplexField, Deriv, RealField, Spectrum, TorusGrid};

#[derive(Debug, Clone)]
pub struct Field {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: TorusGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::new(grid, vec![Complex64::new(c, 0.0); grid.len()])
    }

    pub fn real(f: &RealField) -> Self {
        Self::new(*f.grid(), f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::new(self.grid, self.data.iter().map(|&z| f(z)).collect())
    }

    fn zip(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, data)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn abs2(&self) -> Self {
        self.map(|z| Complex64::new(z.norm_sqr(), 0.0))
    }

    pub fn abs(&self) -> Self {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    pub fn re(&self) -> Self {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn recip(&self) -> Self {
        self.map(|z| z.inv())
    }

    pub fn ln(&self) -> Self {
        self.map(|z| z.ln())
    }

    pub fn sqrt(&self) -> Self {
        self.map(|z| z.sqrt())
    }

    pub fn powi(&self, n: i32) -> Self {
        self.map(|z| z.powi(n))
    }

    pub fn sup(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_re(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }

    pub fn min_re(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, z| m.min(z.re))
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of_complex(&ComplexField::new(self.grid, self.data.clone()).expect("finite field"))
    }

    pub fn d(&self, d: Deriv) -> Field {
        from_spectrum(&self.spectrum(), d)
    }

    pub fn to_real(&self) -> RealField {
        RealField::new(self.grid, self.data.iter().map(|z| z.re).collect()).expect("finite field")
    }
}

pub fn from_spectrum(s: &Spectrum, d: Deriv) -> Field {
    let c = s.derivative(d);
    Field::new(*c.grid(), c.data().to_vec())
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr<&Field> for &Field {
            type Output = Field;
            fn $m(self, rhs: &Field) -> Field {
                self.zip(rhs, |a, b| a $op b)
            }
        }
        impl $tr<Field> for &Field {
            type Output = Field;
            fn $m(self, rhs: Field) -> Field {
                self.zip(&rhs, |a, b| a $op b)
            }
        }
        impl $tr<&Field> for Field {
            type Output = Field;
            fn $m(self, rhs: &Field) -> Field {
                self.zip(rhs, |a, b| a $op b)
            }
        }
        impl $tr<Field> for Field {
            type Output = Field;
            fn $m(self, rhs: Field) -> Field {
                self.zip(&rhs, |a, b| a $op b)
            }
        }
        impl $tr<f64> for &Field {
            type Output = Field;
            fn $m(self, rhs: f64) -> Field {
                self.map(|a| a $op rhs)
            }
        }
        impl $tr<f64> for Field {
            type Output = Field;
            fn $m(self, rhs: f64) -> Field {
                self.map(|a| a $op rhs)
            }
        }
        impl $tr<&Field> for f64 {
            type Output = Field;
            fn $m(self, rhs: &Field) -> Field {
                rhs.map(|b| self $op b)
            }
        }
        impl $tr<Field> for f64 {
            type Output = Field;
            fn $m(self, rhs: Field) -> Field {
                rhs.map(|b| self $op b)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);
binop!(Div, div, /);

impl Neg for Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|a| -a)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|a| -a)
    }
}
