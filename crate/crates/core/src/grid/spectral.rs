use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{parallel, ComplexField, RealField, TorusGrid};
use crate::error::{Error, Result};

/// A constant-coefficient derivative `d_z^a d_zbar^b d_w^c d_wbar^d`, with
/// `d_z = (d_1 - i d_2)/2` and `d_w = (d_3 - i d_4)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Deriv {
    pub z: u8,
    pub zbar: u8,
    pub w: u8,
    pub wbar: u8,
}

impl Deriv {
    pub const ID: Deriv = Deriv::new(0, 0, 0, 0);
    pub const Z: Deriv = Deriv::new(1, 0, 0, 0);
    pub const ZBAR: Deriv = Deriv::new(0, 1, 0, 0);
    pub const W: Deriv = Deriv::new(0, 0, 1, 0);
    pub const WBAR: Deriv = Deriv::new(0, 0, 0, 1);
    pub const ZZBAR: Deriv = Deriv::new(1, 1, 0, 0);
    pub const WWBAR: Deriv = Deriv::new(0, 0, 1, 1);

    pub const fn new(z: u8, zbar: u8, w: u8, wbar: u8) -> Self {
        Self { z, zbar, w, wbar }
    }

    /// Composition of two derivatives.
    pub fn then(self, other: Deriv) -> Self {
        Self::new(
            self.z + other.z,
            self.zbar + other.zbar,
            self.w + other.w,
            self.wbar + other.wbar,
        )
    }

    pub fn order(self) -> u32 {
        (self.z + self.zbar + self.w + self.wbar) as u32
    }

    /// True when the operator maps real fields to real fields.
    pub fn is_real(self) -> bool {
        self.z == self.zbar && self.w == self.wbar
    }

    pub fn conj(self) -> Self {
        Self::new(self.zbar, self.z, self.wbar, self.w)
    }
}

/// Which complex factor a per-slice operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Z,
    W,
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

/// Transforms the rows of a block laid out as `n` rows of stride `s`.
fn fft_strided_block(
    fft: &dyn Fft<f64>,
    block: &mut [Complex64],
    n: usize,
    s: usize,
    buf: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
) {
    buf.resize(n * s, Complex64::default());
    for r in 0..n {
        for c in 0..s {
            buf[c * n + r] = block[r * s + c];
        }
    }
    fft.process_with_scratch(buf, scratch);
    for r in 0..n {
        for c in 0..s {
            block[r * s + c] = buf[c * n + r];
        }
    }
}

/// Unnormalized forward transform, or normalized inverse transform, in place.
pub(crate) fn fft4(grid: &TorusGrid, data: &mut [Complex64], inverse: bool) {
    let dims = grid.dims();
    let strides = grid.strides();
    for axis in 0..4 {
        let n = dims[axis];
        let s = strides[axis];
        let fft = plan(n, inverse);
        let scratch_len = fft.get_inplace_scratch_len();
        if s == 1 {
            if parallel() {
                data.par_chunks_mut(n * 64).for_each(|chunk| {
                    let mut scratch = vec![Complex64::default(); scratch_len];
                    fft.process_with_scratch(chunk, &mut scratch);
                });
            } else {
                let mut scratch = vec![Complex64::default(); scratch_len];
                fft.process_with_scratch(data, &mut scratch);
            }
            continue;
        }
        if parallel() && data.len() / (n * s) > 1 {
            data.par_chunks_mut(n * s).for_each(|block| {
                let mut buf = Vec::new();
                let mut scratch = vec![Complex64::default(); scratch_len];
                fft_strided_block(fft.as_ref(), block, n, s, &mut buf, &mut scratch);
            });
        } else {
            let mut buf = Vec::new();
            let mut scratch = vec![Complex64::default(); scratch_len];
            for block in data.chunks_mut(n * s) {
                fft_strided_block(fft.as_ref(), block, n, s, &mut buf, &mut scratch);
            }
        }
    }
    if inverse {
        let inv = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= inv;
        }
    }
}

/// Signed angular wavenumber of FFT index `i` on an axis of `n` points and
/// period `l`. The Nyquist index maps to `-pi n / l`.
pub(crate) fn wavenumber(i: usize, n: usize, l: f64) -> f64 {
    let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
    2.0 * std::f64::consts::PI * m / l
}

fn pair_symbol(ka: f64, kb: f64, hol: u8, anti: u8) -> Complex64 {
    let i = Complex64::i();
    let dh = 0.5 * (i * ka + kb);
    let da = 0.5 * (i * ka - kb);
    dh.powu(hol as u32) * da.powu(anti as u32)
}

/// Symbol table of `d^hol d^anti` on the axis pair `(a, a+1)`, averaged over
/// `+k_N` and `-k_N` on Nyquist indices so that real data stay real.
fn factor_table(grid: &TorusGrid, a: usize, hol: u8, anti: u8) -> Vec<Complex64> {
    let dims = grid.dims();
    let periods = grid.periods();
    let (na, nb) = (dims[a], dims[a + 1]);
    let mut table = Vec::with_capacity(na * nb);
    for ia in 0..na {
        let ka = wavenumber(ia, na, periods[a]);
        let kas: &[f64] = if ia == na / 2 { &[ka, -ka] } else { &[ka] };
        for ib in 0..nb {
            let kb = wavenumber(ib, nb, periods[a + 1]);
            let kbs: &[f64] = if ib == nb / 2 { &[kb, -kb] } else { &[kb] };
            let mut acc = Complex64::default();
            for &x in kas {
                for &y in kbs {
                    acc += pair_symbol(x, y, hol, anti);
                }
            }
            table.push(acc / (kas.len() * kbs.len()) as f64);
        }
    }
    table
}

struct Symbol {
    z: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl Symbol {
    fn new(grid: &TorusGrid, d: Deriv) -> Self {
        Self {
            z: factor_table(grid, 0, d.z, d.zbar),
            w: factor_table(grid, 2, d.w, d.wbar),
        }
    }
}

/// Fourier coefficients of a field, ready for repeated differentiation.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn of_real(f: &RealField) -> Self {
        let mut data: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft4(f.grid(), &mut data, false);
        Self {
            grid: *f.grid(),
            data,
        }
    }

    pub fn of_complex(f: &ComplexField) -> Self {
        let mut data = f.data().to_vec();
        fft4(f.grid(), &mut data, false);
        Self {
            grid: *f.grid(),
            data,
        }
    }

    /// Wraps raw coefficients in the unnormalized convention of
    /// [`Spectrum::coefficients`].
    pub fn from_coefficients(grid: TorusGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Raw coefficients, unnormalized (the mean mode equals `N * mean`).
    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    fn apply(&self, sym: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
        let d = self.grid.dims();
        let inner = d[2] * d[3];
        let mut out = self.data.clone();
        for (i01, block) in out.chunks_mut(inner).enumerate() {
            for (i23, v) in block.iter_mut().enumerate() {
                *v *= sym(i01, i23);
            }
        }
        out
    }

    pub fn derivative(&self, d: Deriv) -> ComplexField {
        let sym = Symbol::new(&self.grid, d);
        let mut out = self.apply(|a, b| sym.z[a] * sym.w[b]);
        fft4(&self.grid, &mut out, true);
        ComplexField::from_vec(self.grid, out)
    }

    /// Real part of a derivative. Exact for real input and `d.is_real()`.
    pub fn derivative_re(&self, d: Deriv) -> RealField {
        self.derivative(d).re()
    }

    /// Two real derivatives of a real field for the price of one inverse
    /// transform: the first lands in the real part, the second in the
    /// imaginary part.
    pub fn real_pair(&self, a: Deriv, b: Deriv) -> (RealField, RealField) {
        assert!(a.is_real() && b.is_real(), "real_pair needs real operators");
        let sa = Symbol::new(&self.grid, a);
        let sb = Symbol::new(&self.grid, b);
        let i = Complex64::i();
        let mut out = self.apply(|x, y| sa.z[x] * sa.w[y] + i * sb.z[x] * sb.w[y]);
        fft4(&self.grid, &mut out, true);
        let ra = out.iter().map(|c| c.re).collect();
        let rb = out.iter().map(|c| c.im).collect();
        (
            RealField::from_vec(self.grid, ra),
            RealField::from_vec(self.grid, rb),
        )
    }

    /// Exponential filter `exp(-36 (|m|/m_N)^order)` applied per axis, in place.
    pub fn filter(&mut self, order: u32) {
        let dims = self.grid.dims();
        let axis_factor = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let m = if i <= n / 2 { i } else { n - i } as f64;
                    (-36.0 * (m / (n / 2) as f64).powi(order as i32)).exp()
                })
                .collect()
        };
        let f: Vec<Vec<f64>> = dims.iter().map(|&n| axis_factor(n)).collect();
        for (flat, v) in self.data.iter_mut().enumerate() {
            let i = self.grid.multi_index(flat);
            *v *= f[0][i[0]] * f[1][i[1]] * f[2][i[2]] * f[3][i[3]];
        }
    }

    pub fn to_real(&self) -> RealField {
        let mut out = self.data.clone();
        fft4(&self.grid, &mut out, true);
        RealField::from_vec(self.grid, out.iter().map(|c| c.re).collect())
    }
}

impl RealField {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of_real(self)
    }

    pub fn deriv(&self, d: Deriv) -> ComplexField {
        self.spectrum().derivative(d)
    }

    /// `d_z d_zbar` and `d_w d_wbar` of this field.
    pub fn laplacians(&self) -> (RealField, RealField) {
        self.spectrum().real_pair(Deriv::ZZBAR, Deriv::WWBAR)
    }
}

impl ComplexField {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of_complex(self)
    }

    pub fn deriv(&self, d: Deriv) -> ComplexField {
        self.spectrum().derivative(d)
    }
}

/// Solves `v_{z zbar} = rhs` (or `v_{w wbar} = rhs`) on every slice of the
/// other factor, returning the solution with zero slice means.
pub fn poisson_solve_factor(rhs: &RealField, factor: Factor) -> Result<RealField> {
    let grid = *rhs.grid();
    let d = grid.dims();
    let (outer_axes, inner_axes) = match factor {
        Factor::Z => ([2, 3], [0, 1]),
        Factor::W => ([0, 1], [2, 3]),
    };
    let limit = 1e-10 * rhs.sup_norm();
    let n_in = d[inner_axes[0]] * d[inner_axes[1]];
    let mut worst = 0.0f64;
    for a in 0..d[outer_axes[0]] {
        for b in 0..d[outer_axes[1]] {
            let mut s = 0.0;
            for p in 0..d[inner_axes[0]] {
                for q in 0..d[inner_axes[1]] {
                    let mut idx = [0; 4];
                    idx[outer_axes[0]] = a;
                    idx[outer_axes[1]] = b;
                    idx[inner_axes[0]] = p;
                    idx[inner_axes[1]] = q;
                    s += rhs.data()[grid.index(idx)];
                }
            }
            worst = worst.max((s / n_in as f64).abs());
        }
    }
    if worst > limit {
        return Err(Error::IncompatiblePoisson { mean: worst, limit });
    }
    let op = match factor {
        Factor::Z => Symbol::new(&grid, Deriv::ZZBAR),
        Factor::W => Symbol::new(&grid, Deriv::WWBAR),
    };
    let spec = rhs.spectrum();
    let mut out = spec.apply(|x, y| {
        let m = match factor {
            Factor::Z => op.z[x],
            Factor::W => op.w[y],
        };
        if m.norm() == 0.0 {
            Complex64::default()
        } else {
            1.0 / m
        }
    });
    fft4(&grid, &mut out, true);
    Ok(RealField::from_vec(
        grid,
        out.iter().map(|c| c.re).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::cube(8).unwrap()
    }

    #[test]
    fn zzbar_of_sin_x1() {
        let g = grid();
        let u = RealField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let (lz, lw) = u.laplacians();
        for i in 0..g.len() {
            let x = g.point(i);
            assert_abs_diff_eq!(lz.data()[i], -PI * PI * (2.0 * PI * x[0]).sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(lw.data()[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_derivatives_of_plane_wave() {
        let g = grid();
        let u = RealField::from_fn(g, |x| (2.0 * PI * x[1]).cos());
        let uz = u.deriv(Deriv::Z);
        // d_z cos(2 pi x2) = -(i/2) * (-2 pi sin) = i pi sin(2 pi x2)
        for i in 0..g.len() {
            let x = g.point(i);
            assert_abs_diff_eq!(uz.data()[i].re, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(uz.data()[i].im, PI * (2.0 * PI * x[1]).sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn nyquist_symbols() {
        let g = grid();
        // Alternating sign along x1 is the pure Nyquist mode.
        let u = RealField::from_fn(g, |x| if ((x[0] * 8.0).round() as i64) % 2 == 0 { 1.0 } else { -1.0 });
        let uz = u.deriv(Deriv::Z);
        assert!(uz.sup_norm() < 1e-12);
        let (lz, _) = u.laplacians();
        let kn = PI * 8.0;
        for i in 0..g.len() {
            assert_abs_diff_eq!(lz.data()[i], -kn * kn / 4.0 * u.data()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn poisson_cos_x1() {
        let g = grid();
        let rhs = RealField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let v = poisson_solve_factor(&rhs, Factor::Z).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            assert_abs_diff_eq!(v.data()[i], -(2.0 * PI * x[0]).cos() / (PI * PI), epsilon = 1e-13);
        }
    }

    #[test]
    fn poisson_rejects_nonzero_slice_mean() {
        let g = grid();
        let rhs = RealField::from_fn(g, |x| 1.0 + (2.0 * PI * x[0]).cos());
        assert!(matches!(
            poisson_solve_factor(&rhs, Factor::Z),
            Err(Error::IncompatiblePoisson { .. })
        ));
        // A w-only function has nonzero z-slice means.
        let rhs = RealField::from_fn(g, |x| (2.0 * PI * x[2]).cos());
        assert!(poisson_solve_factor(&rhs, Factor::Z).is_err());
        assert!(poisson_solve_factor(&rhs, Factor::W).is_ok());
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let g = TorusGrid::new([8, 16, 8, 32], [1.0, 2.0, 1.0, 0.5]).unwrap();
        let u = RealField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[3] - (x[2] * 7.0).cos());
        let back = u.spectrum().to_real();
        for (a, b) in u.data().iter().zip(back.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let g = TorusGrid::cube(8).unwrap();
        let u = RealField::from_fn(g, |x| (2.0 * PI * (x[0] + 2.0 * x[3])).sin());
        let (a, b) = u.laplacians();
        crate::grid::set_parallel(true);
        let (c, d) = u.laplacians();
        crate::grid::set_parallel(false);
        for i in 0..g.len() {
            assert_abs_diff_eq!(a.data()[i], c.data()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b.data()[i], d.data()[i], epsilon = 1e-12);
        }
    }
}
