use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{Deriv, RealField, Spectrum, TorusGrid};

use super::algebra::{from_spectrum, Field};

/// Everything needed to evaluate both sides of an evolution identity at one
/// instant: the background, `u`, the traces and the flow speed, with cached
/// spectra for repeated differentiation.
///
/// Traces are `lambda = (a + u_{z zbar})/g` and `eta = (b - u_{w wbar})/h`.
/// On a manifold `a = g`, `b = h`; in the local quadratic form `g = h = 1`
/// and `a`, `b` are the constant quadratic coefficients.
#[derive(Debug, Clone)]
pub struct Slice {
    grid: TorusGrid,
    beta: f64,
    pub g: Field,
    pub h: Field,
    g_s: Spectrum,
    h_s: Spectrum,
    u_s: Spectrum,
    pub lambda: Field,
    pub eta: Field,
    lambda_s: Spectrum,
    eta_s: Spectrum,
    /// `beta log lambda - log eta`.
    pub speed: Field,
    speed_s: Spectrum,
}

impl Slice {
    pub fn on_background(u: &RealField, bg: &Background, beta: f64) -> Result<Self> {
        Self::build(u, bg.g(), bg.h(), bg.g(), bg.h(), beta)
    }

    /// `u = a|z|^2 - b|w|^2 + p` with flat coefficients; only the periodic
    /// part `p` is stored, since every quantity involves second or higher
    /// derivatives.
    pub fn local(p: &RealField, a: f64, b: f64, beta: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidField(format!(
                "quadratic coefficients must be positive, got a = {a}, b = {b}"
            )));
        }
        let grid = *p.grid();
        let one = RealField::constant(grid, 1.0);
        Self::build(
            p,
            &one,
            &one,
            &RealField::constant(grid, a),
            &RealField::constant(grid, b),
            beta,
        )
    }

    fn build(
        u: &RealField,
        g: &RealField,
        h: &RealField,
        a: &RealField,
        b: &RealField,
        beta: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("beta = {beta} outside (0, 1]")));
        }
        let grid = *u.grid();
        let u_s = Spectrum::of_real(u);
        let (uzz, uww) = u_s.real_pair(Deriv::ZZBAR, Deriv::WWBAR);
        let lam = a.add(&uzz).zip_map(g, |x, g| x / g);
        let eta = b.sub(&uww).zip_map(h, |x, h| x / h);
        let (lmin, emin) = (lam.min(), eta.min());
        if !(lmin > 0.0 && emin > 0.0) {
            return Err(Error::InvalidField(format!(
                "inadmissible slice: min lambda = {lmin:.3e}, min eta = {emin:.3e}"
            )));
        }
        let speed = lam.zip_map(&eta, |l, e| beta * l.ln() - e.ln());
        Ok(Self {
            grid,
            beta,
            g: Field::real(g),
            h: Field::real(h),
            g_s: Spectrum::of_real(g),
            h_s: Spectrum::of_real(h),
            u_s,
            lambda_s: Spectrum::of_real(&lam),
            eta_s: Spectrum::of_real(&eta),
            speed_s: Spectrum::of_real(&speed),
            lambda: Field::real(&lam),
            eta: Field::real(&eta),
            speed: Field::real(&speed),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn du(&self, d: Deriv) -> Field {
        from_spectrum(&self.u_s, d)
    }

    pub fn dg(&self, d: Deriv) -> Field {
        from_spectrum(&self.g_s, d)
    }

    pub fn dh(&self, d: Deriv) -> Field {
        from_spectrum(&self.h_s, d)
    }

    pub fn dlambda(&self, d: Deriv) -> Field {
        from_spectrum(&self.lambda_s, d)
    }

    pub fn deta(&self, d: Deriv) -> Field {
        from_spectrum(&self.eta_s, d)
    }

    pub fn dspeed(&self, d: Deriv) -> Field {
        from_spectrum(&self.speed_s, d)
    }

    /// `d lambda / dt = speed_{z zbar} / g`.
    pub fn lambda_t(&self) -> Field {
        self.dspeed(Deriv::ZZBAR) / &self.g
    }

    /// `d eta / dt = -speed_{w wbar} / h`.
    pub fn eta_t(&self) -> Field {
        -(self.dspeed(Deriv::WWBAR) / &self.h)
    }

    /// Weight of `d_z d_zbar` in the linearized operator, `beta / (g lambda)`.
    pub fn weight_z(&self) -> Field {
        self.beta / (&self.g * &self.lambda)
    }

    /// Weight of `d_w d_wbar`, `1 / (h eta)`.
    pub fn weight_w(&self) -> Field {
        1.0 / (&self.h * &self.eta)
    }

    /// The linearized operator applied to a field.
    pub fn lop(&self, f: &Field) -> Field {
        self.lop_spectrum(&f.spectrum())
    }

    pub fn lop_spectrum(&self, s: &Spectrum) -> Field {
        let fz = from_spectrum(s, Deriv::ZZBAR);
        let fw = from_spectrum(s, Deriv::WWBAR);
        self.weight_z() * fz + self.weight_w() * fw
    }
}
