//! Rescaling, gauge and normalization steps that bring the forced flow to
//! the reduced problem.

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{poisson_solve_factor, Factor, RealField};

#[derive(Debug, Clone)]
pub struct Normalized {
    pub beta: f64,
    pub f: RealField,
    /// Running the normalized flow to `time_scale * T` reproduces the
    /// original flow at time `T`.
    pub time_scale: f64,
}

/// Divides the equation `u_t = beta log lambda - alpha log eta - f` by
/// `alpha`.
pub fn normalize_exponents(alpha: f64, beta: f64, f: &RealField) -> Result<Normalized> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::Config(format!(
            "exponents must be positive (alpha = {alpha}, beta = {beta})"
        )));
    }
    if beta > alpha {
        return Err(Error::Config(format!(
            "beta / alpha = {} exceeds 1",
            beta / alpha
        )));
    }
    Ok(Normalized {
        beta: beta / alpha,
        f: f.scale(1.0 / alpha),
        time_scale: alpha,
    })
}

pub fn shift_min_zero(u0: &RealField) -> RealField {
    let m = u0.min();
    u0.map(|v| v - m)
}

fn require_kahler(bg: &Background) -> Result<()> {
    if !bg.is_kahler() {
        return Err(Error::Unsupported(
            "the gauge step is only available on Kähler products".into(),
        ));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{name} is not finite")))
    }
}

/// Shifts `f_plus` and `f_minus` by constants so that
/// `int g e^{f_plus/beta} = int g` and `int h e^{-f_minus} = int h`.
pub fn normalize_compat(
    bg: &Background,
    f_plus: &RealField,
    f_minus: &RealField,
    beta: f64,
) -> Result<(RealField, RealField)> {
    let (b_plus, b_minus) = gauge_constants(bg, f_plus, f_minus, beta)?;
    Ok((f_plus.shift(b_plus), f_minus.shift(b_minus)))
}

fn gauge_constants(
    bg: &Background,
    f_plus: &RealField,
    f_minus: &RealField,
    beta: f64,
) -> Result<(f64, f64)> {
    let g = bg.g();
    let h = bg.h();
    let num_p = g.integral();
    let den_p = g.zip_map(f_plus, |g, f| g * (f / beta).exp()).integral();
    let b_plus = check_finite("b_plus", beta * (num_p / den_p).ln())?;
    let num_m = h.zip_map(f_minus, |h, f| h * (-f).exp()).integral();
    let den_m = h.integral();
    let b_minus = check_finite("b_minus", (num_m / den_m).ln())?;
    Ok((b_plus, b_minus))
}

/// The gauge constants make the means vanish up to rounding; the residue is
/// removed so the Poisson compatibility test sees exact zeros.
fn remove_roundoff_mean(rhs: RealField, scale: f64) -> Result<RealField> {
    let m = rhs.mean();
    if m.abs() > 1e-10 * scale {
        return Err(Error::Numerical(format!("gauge right-hand side has mean {m:e}")));
    }
    Ok(rhs.shift(-m))
}

#[derive(Debug, Clone)]
pub struct Gauge {
    pub u_inf: RealField,
    pub b_plus: f64,
    pub b_minus: f64,
}

/// Steady potential of the forced flow on a Kähler product.
///
/// `b_plus` and `b_minus` are the constants making the two Poisson problems
/// `(u+)_{z zbar} = g (e^{(f+ + b+)/beta} - 1)` and
/// `(u-)_{w wbar} = h (1 - e^{-(f- + b-)})` solvable. Both vanish when the
/// forcing already satisfies the compatibility normalization.
pub fn gauge_out_f(
    bg: &Background,
    f_plus: &RealField,
    f_minus: &RealField,
    beta: f64,
) -> Result<Gauge> {
    require_kahler(bg)?;
    let (b_plus, b_minus) = gauge_constants(bg, f_plus, f_minus, beta)?;
    let rhs_p = bg
        .g()
        .zip_map(f_plus, |g, f| g * (((f + b_plus) / beta).exp() - 1.0));
    let rhs_m = bg.h().zip_map(f_minus, |h, f| h * (1.0 - (-(f + b_minus)).exp()));
    let u_plus = poisson_solve_factor(&remove_roundoff_mean(rhs_p, bg.g().sup_norm())?, Factor::Z)?;
    let u_minus = poisson_solve_factor(&remove_roundoff_mean(rhs_m, bg.h().sup_norm())?, Factor::W)?;
    Ok(Gauge {
        u_inf: u_plus.add(&u_minus),
        b_plus,
        b_minus,
    })
}
