//! Evolution identities on the product torus with a pluriclosed background.

use crate::error::Result;
use crate::geometry::{constants, curvature, Background, ConstantOptions};
use crate::grid::Deriv;

use super::algebra::Field;
use super::expr::{heat, Expr};
use super::slice::Slice;
use super::{Outcome, EQUALITY_TOL, INEQUALITY_TOL, ROUNDOFF_TOL};

const ZW: Deriv = Deriv::new(1, 0, 1, 0);

/// First derivatives of the traces and the background, shared by most
/// right-hand sides.
struct Firsts {
    lz: Field,
    lw: Field,
    ez: Field,
    ew: Field,
    gz: Field,
    gw: Field,
    hz: Field,
    hw: Field,
    gwwb: Field,
    hzzb: Field,
}

impl Firsts {
    fn new(s: &Slice) -> Self {
        Self {
            lz: s.dlambda(Deriv::Z),
            lw: s.dlambda(Deriv::W),
            ez: s.deta(Deriv::Z),
            ew: s.deta(Deriv::W),
            gz: s.dg(Deriv::Z),
            gw: s.dg(Deriv::W),
            hz: s.dh(Deriv::Z),
            hw: s.dh(Deriv::W),
            gwwb: s.dg(Deriv::WWBAR).re(),
            hzzb: s.dh(Deriv::ZZBAR).re(),
        }
    }

    /// `|lambda_w/lambda + g_w/g|^2`.
    fn s_w(&self, s: &Slice) -> Field {
        (&self.lw / &s.lambda + &self.gw / &s.g).abs2()
    }

    /// `|eta_z/eta + h_z/h|^2`.
    fn s_z(&self, s: &Slice) -> Field {
        (&self.ez / &s.eta + &self.hz / &s.h).abs2()
    }

    /// `h_{z zbar}/h - |h_z/h|^2`.
    fn t_z(&self, s: &Slice) -> Field {
        &self.hzzb / &s.h - (&self.hz / &s.h).abs2()
    }

    /// `g_{w wbar}/g - |g_w/g|^2`.
    fn t_w(&self, s: &Slice) -> Field {
        &self.gwwb / &s.g - (&self.gw / &s.g).abs2()
    }
}

fn speed_expr(beta: f64) -> Expr {
    Expr::sum([
        Expr::scaled(beta, Expr::log(Expr::Lambda)),
        Expr::scaled(-1.0, Expr::log(Expr::Eta)),
    ])
}

fn heat_lambda_rhs(s: &Slice, f: &Firsts) -> Field {
    let beta = s.beta();
    let (g, h, lam, eta) = (&s.g, &s.h, &s.lambda, &s.eta);
    let gh = g * h;
    -beta / g * (&f.lz / lam).abs2()
        + 2.0 / (h * eta) * (&f.gw * f.lw.conj() / g).re()
        + 1.0 / g * (&f.ez / eta).abs2()
        + 2.0 / g * (&f.hz * f.ez.conj() / (h * eta)).re()
        + &f.gwwb / &gh * lam / eta
        + &f.hzzb / &gh
}

pub(super) fn tampered_a4(s: &Slice) -> Result<Outcome> {
    let f = Firsts::new(s);
    let rhs = heat_lambda_rhs(s, &f) * (1.0 + 1e-3);
    Ok(Outcome::equality("A4", EQ_A4, &heat(&Expr::Lambda, s)?, &rhs, 0.0, EQUALITY_TOL))
}

const EQ_A1: &str = "L u = 1/eta - beta/lambda + (beta - 1)";
const EQ_A2: &str = "H u = du/dt + beta/lambda - 1/eta + (1 - beta)";
const EQ_HDU: &str = "H (du/dt) = 0";
const EQ_A3: &str = "(g lambda)_{w wbar} + (h eta)_{z zbar} = 0";
const EQ_A4: &str = "H lambda = -beta/g |lambda_z/lambda|^2 + 2/(h eta) Re(g_w lambda_wbar/g) + 1/g |eta_z/eta|^2 \
                     + 2/g Re(h_z eta_zbar/(h eta)) + g_{w wbar}/(g h) lambda/eta + h_{z zbar}/(g h)";
const EQ_A5: &str = "H eta = beta/h |lambda_w/lambda|^2 + 2 beta/h Re(g_w lambda_wbar/(g lambda)) \
                     + 2 beta/(g lambda) Re(h_z eta_zbar/h) - 1/h |eta_w/eta|^2 + beta h_{z zbar}/(g h) eta/lambda \
                     + beta g_{w wbar}/(g h)";
const EQ_A6: &str = "H log lambda = S_w/(h eta) + S_z/(g lambda) + T_z/(g lambda) + T_w/(h eta), \
                     S_w = |lambda_w/lambda + g_w/g|^2, S_z = |eta_z/eta + h_z/h|^2, \
                     T_z = h_{z zbar}/h - |h_z/h|^2, T_w = g_{w wbar}/g - |g_w/g|^2";
const EQ_A6_SIGN: &str = "H log lambda >= 0 when T_z >= 0 and T_w >= 0";
const EQ_A7: &str = "H log eta = beta H log lambda";
const EQ_A8: &str = "H (1/lambda) = -beta/(g lambda^2) |lambda_z/lambda|^2 - (S_w + |lambda_w/lambda|^2)/(h lambda eta) \
                     - S_z/(g lambda^2) - T_z/(g lambda^2) - T_w/(h lambda eta)";
const EQ_A9: &str = "H (1/eta) = -beta S_w/(h eta^2) - beta (S_z + |eta_z/eta|^2)/(g lambda eta) \
                     - 1/(h eta^2) |eta_w/eta|^2 - beta T_z/(g lambda eta) - beta T_w/(h eta^2)";

/// Trace identities: the linearized operator on `u`, the heat operator on
/// `u`, `du/dt`, the traces, their logarithms and reciprocals.
pub fn verify_a(s: &Slice, bg: &Background) -> Result<Vec<Outcome>> {
    let beta = s.beta();
    let f = Firsts::new(s);
    let (g, h, lam, eta) = (&s.g, &s.h, &s.lambda, &s.eta);
    let mut out = Vec::new();

    let u = s.du(Deriv::ID);
    let lu = s.lop(&u);
    let a1 = 1.0 / eta - beta / lam + (beta - 1.0);
    out.push(Outcome::equality("A1", EQ_A1, &lu, &a1, 0.0, ROUNDOFF_TOL));

    let hu = heat(&Expr::U(Deriv::ID), s)?;
    let a2 = &s.speed + beta / lam - 1.0 / eta + (1.0 - beta);
    out.push(Outcome::equality("A2", EQ_A2, &hu, &a2, 0.0, ROUNDOFF_TOL));

    let h_speed = heat(&speed_expr(beta), s)?;
    let zero = Field::constant(*s.grid(), 0.0);
    let lf = s.lop(&s.speed);
    out.push(Outcome::equality("H_du_dt", EQ_HDU, &h_speed, &zero, lf.sup(), ROUNDOFF_TOL));

    let gl_ww = (g * lam).d(Deriv::WWBAR);
    let he_zz = (h * eta).d(Deriv::ZZBAR);
    let a3 = &gl_ww + &he_zz;
    out.push(Outcome::equality(
        "A3",
        EQ_A3,
        &a3,
        &zero,
        gl_ww.sup().max(he_zz.sup()),
        ROUNDOFF_TOL,
    ));

    let a4 = heat_lambda_rhs(s, &f);
    out.push(Outcome::equality("A4", EQ_A4, &heat(&Expr::Lambda, s)?, &a4, 0.0, EQUALITY_TOL));

    let gh = g * h;
    let a5 = beta / h * (&f.lw / lam).abs2()
        + 2.0 * beta / h * (&f.gw * f.lw.conj() / (g * lam)).re()
        + 2.0 * beta / (g * lam) * (&f.hz * f.ez.conj() / h).re()
        - 1.0 / h * (&f.ew / eta).abs2()
        + beta * &f.hzzb / &gh * eta / lam
        + beta * &f.gwwb / &gh;
    out.push(Outcome::equality("A5", EQ_A5, &heat(&Expr::Eta, s)?, &a5, 0.0, EQUALITY_TOL));

    let (sw, sz, tz, tw) = (f.s_w(s), f.s_z(s), f.t_z(s), f.t_w(s));
    let he = h * eta;
    let gl = g * lam;
    let h_log_lambda = heat(&Expr::log(Expr::Lambda), s)?;
    let a6 = &sw / &he + &sz / &gl + &tz / &gl + &tw / &he;
    out.push(Outcome::equality("A6", EQ_A6, &h_log_lambda, &a6, 0.0, EQUALITY_TOL));
    if curvature(bg).cor8_holds {
        out.push(Outcome::upper("A6_sign", EQ_A6_SIGN, &zero, &h_log_lambda, EQUALITY_TOL));
    }

    let h_log_eta = heat(&Expr::log(Expr::Eta), s)?;
    out.push(Outcome::equality("A7", EQ_A7, &h_log_eta, &(beta * &h_log_lambda), 0.0, ROUNDOFF_TOL));

    let lam2 = lam * lam;
    let a8 = -beta / (g * &lam2) * (&f.lz / lam).abs2()
        - 1.0 / (&he * lam) * (&sw + (&f.lw / lam).abs2())
        - &sz / (g * &lam2)
        - &tz / (g * &lam2)
        - &tw / (&he * lam);
    out.push(Outcome::equality("A8", EQ_A8, &heat(&Expr::recip(Expr::Lambda), s)?, &a8, 0.0, EQUALITY_TOL));

    let eta2 = eta * eta;
    let a9 = -beta * &sw / (h * &eta2)
        - beta / (&gl * eta) * (&sz + (&f.ez / eta).abs2())
        - 1.0 / (h * &eta2) * (&f.ew / eta).abs2()
        - beta * &tz / (&gl * eta)
        - beta * &tw / (h * &eta2);
    out.push(Outcome::equality("A9", EQ_A9, &heat(&Expr::recip(Expr::Eta), s)?, &a9, 0.0, EQUALITY_TOL));
    Ok(out)
}

/// Right-hand sides of the reciprocal identities with the factor 2 on the
/// mixed squares, which agree with the heat operator only without torsion.
#[cfg(test)]
fn doubled_reciprocal_rhs(s: &Slice) -> (Field, Field) {
    let beta = s.beta();
    let f = Firsts::new(s);
    let (g, h, lam, eta) = (&s.g, &s.h, &s.lambda, &s.eta);
    let (sw, sz, tz, tw) = (f.s_w(s), f.s_z(s), f.t_z(s), f.t_w(s));
    let lam2 = lam * lam;
    let eta2 = eta * eta;
    let a8 = -beta / (g * &lam2) * (&f.lz / lam).abs2() - 2.0 / (h * lam * eta) * &sw - &sz / (g * &lam2)
        - &tz / (g * &lam2)
        - &tw / (h * lam * eta);
    let a9 = -beta / (h * &eta2) * &sw - 2.0 * beta / (g * lam * eta) * &sz - 1.0 / (h * &eta2) * (&f.ew / eta).abs2()
        - beta * &tz / (g * lam * eta)
        - beta * &tw / (h * &eta2);
    (a8, a9)
}

const EQ_B11: &str = "(d/dt - rough Laplacian)(u_zw) = Psi_zw = (h_zw - h_z h_w/h - h_z g_w/g)(eta - 1)/(h eta) \
                      + beta(-g_zw + g_z g_w/g + h_z g_w/h)(lambda - 1)/(g lambda) \
                      + (beta - 1) eta_z g_w/(g eta) - beta eta_z g_w/(g lambda eta) + h_z eta_w/(h eta^2) \
                      + (beta - 1) h_z lambda_w/(h lambda) - beta lambda_z g_w/(g lambda^2) + h_z lambda_w/(h lambda eta) \
                      + (beta - 1) eta_z lambda_w/(eta lambda)";
const EQ_B12: &str = "Gamma^z_{iz} + Gamma^w_{iw} = g_i/g + lambda_i/lambda + h_i/h + eta_i/eta = d_i log(g lambda h eta)";
const EQ_B18: &str = "H |nu|^2 = -|dbar nu|^2 - |nabla nu|^2 - |nu|^2 H log(g lambda h eta) + 2 Re <Psi, conj nu>, \
                      |nu|^2 = beta |u_zw|^2/(g lambda h eta)";
const EQ_B25: &str = "|dbar nu|^2 = beta^2/(h eta) |lambda_w/lambda + g_w/g - g_w/(g lambda)|^2 \
                      + beta/(g lambda) |eta_z/eta + h_z/h - h_z/(h eta)|^2";
const EQ_B23: &str = "H |nu|^2 <= C8(1/eps + 1/delta - beta^2) + C3 |nu| + C6 |nu|^2 \
                      + C7(|eta_w/eta|^2/(h eta^2) + |lambda_z/lambda|^2/(g lambda^2)) \
                      + (-beta^2(1 - delta) + sqrt(beta)(1 - beta)|nu| - (1 + beta - eps)|nu|^2)(S_w/(h eta) + S_z/(g lambda))";

/// `Psi_zw` of the mixed-derivative evolution.
fn psi(s: &Slice, f: &Firsts) -> Field {
    let beta = s.beta();
    let (g, h, lam, eta) = (&s.g, &s.h, &s.lambda, &s.eta);
    let gzw = s.dg(ZW);
    let hzw = s.dh(ZW);
    (hzw - &f.hz * &f.hw / h - &f.hz * &f.gw / g) * (eta - 1.0) / (h * eta)
        + beta * (-gzw + &f.gz * &f.gw / g + &f.hz * &f.gw / h) * (lam - 1.0) / (g * lam)
        + ((beta - 1.0) * &f.ez * &f.gw / (g * eta) - beta * &f.ez * &f.gw / (g * lam * eta)
            + &f.hz * &f.ew / (h * eta * eta))
        + ((beta - 1.0) * &f.hz * &f.lw / (h * lam) - beta * &f.lz * &f.gw / (g * lam * lam)
            + &f.hz * &f.lw / (h * lam * eta))
        + (beta - 1.0) * &f.ez * &f.lw / (eta * lam)
}

/// Mixed-derivative identities: the rough heat flow of `u_zw`, the
/// connection trace, the Bochner formula for its norm, the `dbar` norm, and
/// the one-sided estimate with the module's constants.
pub fn verify_b(s: &Slice, bg: &Background) -> Result<Vec<Outcome>> {
    let beta = s.beta();
    let f = Firsts::new(s);
    let (g, h, lam, eta) = (&s.g, &s.h, &s.lambda, &s.eta);
    let mut out = Vec::new();

    let uzw = s.du(ZW);
    let uzwzb = s.du(Deriv::new(1, 1, 1, 0));
    let uzwwb = s.du(Deriv::new(1, 0, 1, 1));
    let gamma_z = &f.gz / g + &f.lz / lam + &f.hz / h + &f.ez / eta;
    let gamma_w = &f.gw / g + &f.lw / lam + &f.hw / h + &f.ew / eta;
    let (wz, ww) = (s.weight_z(), s.weight_w());

    let rough = s.lop(&uzw) - &wz * &gamma_z * &uzwzb - &ww * &gamma_w * &uzwwb;
    let lhs = s.dspeed(ZW) - rough;
    let psi = psi(s, &f);
    out.push(Outcome::equality("B11", EQ_B11, &lhs, &psi, 0.0, EQUALITY_TOL));

    let log_all = (g * lam * h * eta).ln();
    let tz = log_all.d(Deriv::Z);
    let tw = log_all.d(Deriv::W);
    out.push(Outcome::equality_pairs(
        "B12",
        EQ_B12,
        &[(&tz, &gamma_z), (&tw, &gamma_w)],
        0.0,
        EQUALITY_TOL,
    ));

    let metric = beta / (g * lam * h * eta);
    let nu2_expr = Expr::product([
        Expr::Const(beta),
        Expr::recip(Expr::product([Expr::G, Expr::Lambda, Expr::H, Expr::Eta])),
        Expr::U(ZW),
        Expr::conj(Expr::U(ZW)),
    ]);
    let h_nu2 = heat(&nu2_expr, s)?;
    let nu2 = &metric * uzw.abs2();
    let dbar2 = &metric * (&wz * uzwzb.abs2() + &ww * uzwwb.abs2());
    let cov_z = s.du(Deriv::new(2, 0, 1, 0)) - &gamma_z * &uzw;
    let cov_w = s.du(Deriv::new(1, 0, 2, 0)) - &gamma_w * &uzw;
    let nabla2 = &metric * (&wz * cov_z.abs2() + &ww * cov_w.abs2());
    let h_log_all = heat(
        &Expr::log(Expr::product([Expr::G, Expr::Lambda, Expr::H, Expr::Eta])),
        s,
    )?;
    let b18 = -&dbar2 - &nabla2 - &nu2 * &h_log_all + 2.0 * (&metric * &psi * uzw.conj()).re();
    out.push(Outcome::equality("B18", EQ_B18, &h_nu2, &b18, 0.0, EQUALITY_TOL));

    let b25 = beta * beta / (h * eta) * (&f.lw / lam + &f.gw / g - &f.gw / (g * lam)).abs2()
        + beta / (g * lam) * (&f.ez / eta + &f.hz / h - &f.hz / (h * eta)).abs2();
    out.push(Outcome::equality("B25", EQ_B25, &dbar2, &b25, 0.0, EQUALITY_TOL));

    let c0 = (1.0 / lam + 1.0 / eta).max_re();
    let report = constants(bg, beta, c0, ConstantOptions::default())?;
    let (eps, delta) = report
        .prop11
        .as_ref()
        .map_or((0.5, 0.5), |p| (p.epsilon, p.delta));
    let nu = nu2.sqrt();
    let sw = f.s_w(s);
    let sz = f.s_z(s);
    let rhs = report.c8 * (1.0 / eps + 1.0 / delta - beta * beta)
        + report.c3 * &nu
        + report.c6 * &nu2
        + report.c7 * ((&f.ew / eta).abs2() / (h * eta * eta) + (&f.lz / lam).abs2() / (g * lam * lam))
        + (-beta * beta * (1.0 - delta) + beta.sqrt() * (1.0 - beta) * &nu - (1.0 + beta - eps) * &nu2)
            * (&sw / (h * eta) + &sz / (g * lam));
    out.push(Outcome::upper("B23", EQ_B23, &h_nu2.re(), &rhs, INEQUALITY_TOL));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{kahler_product_background, pluriclosed_background, PluriMode};
    use crate::grid::{RealField, TorusGrid};
    use std::f64::consts::PI;

    fn cosine_bg(n: usize) -> Background {
        let grid = TorusGrid::cube(n).unwrap();
        pluriclosed_background(grid, 1.0, 1.0, &[PluriMode { k: 1, m: 1, a: 0.5 }]).unwrap()
    }

    fn generic_u(grid: TorusGrid, amp: f64) -> RealField {
        RealField::from_fn(grid, |x| {
            amp * ((2.0 * PI * x[0] + 0.3).sin() * (2.0 * PI * x[2]).cos()
                + 0.5 * (2.0 * PI * (x[1] + x[3])).cos()
                + 0.7 * (2.0 * PI * (x[0] - x[3]) + 1.0).sin()
                + 0.4 * (2.0 * PI * x[1]).cos())
        })
    }

    fn by_name<'a>(v: &'a [Outcome], name: &str) -> &'a Outcome {
        v.iter().find(|o| o.name == name).unwrap()
    }

    #[test]
    fn trace_identities_on_cosine_background() {
        let bg = cosine_bg(16);
        let grid = *bg.grid();
        let u = RealField::from_fn(grid, |x| 0.004 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).cos());
        let s = Slice::on_background(&u, &bg, 0.7).unwrap();
        let a = verify_a(&s, &bg).unwrap();
        assert!(by_name(&a, "A4").residual <= 1e-8, "{:?}", by_name(&a, "A4"));
        assert!(by_name(&a, "A7").residual <= 1e-10);
        assert!(by_name(&a, "H_du_dt").residual <= 1e-14, "{:?}", by_name(&a, "H_du_dt"));
        for o in &a {
            assert!(o.passes(), "{o:?}");
        }
    }

    #[test]
    fn doubled_mixed_square_fails_with_torsion_and_holds_without() {
        let bg = cosine_bg(16);
        let grid = *bg.grid();
        let u = generic_u(grid, 0.01);
        let s = Slice::on_background(&u, &bg, 0.7).unwrap();
        let (a8, a9) = doubled_reciprocal_rhs(&s);
        let lhs8 = heat(&Expr::recip(Expr::Lambda), &s).unwrap();
        let lhs9 = heat(&Expr::recip(Expr::Eta), &s).unwrap();
        let r8 = Outcome::equality("", "", &lhs8, &a8, 0.0, 1e-8).residual;
        let r9 = Outcome::equality("", "", &lhs9, &a9, 0.0, 1e-8).residual;
        assert!(r8 > 1e-3 && r9 > 1e-3, "{r8} {r9}");

        let g = RealField::from_fn(grid, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos());
        let h = RealField::from_fn(grid, |x| 1.0 + 0.05 * (2.0 * PI * x[3]).sin());
        let kbg = kahler_product_background(&g, &h).unwrap();
        let split = RealField::from_fn(grid, |x| 0.004 * (2.0 * PI * x[1]).sin() + 0.004 * (2.0 * PI * x[2]).cos());
        let s = Slice::on_background(&split, &kbg, 0.7).unwrap();
        let (a8, a9) = doubled_reciprocal_rhs(&s);
        let lhs8 = heat(&Expr::recip(Expr::Lambda), &s).unwrap();
        let lhs9 = heat(&Expr::recip(Expr::Eta), &s).unwrap();
        assert!(Outcome::equality("", "", &lhs8, &a8, 0.0, 1e-8).passes());
        assert!(Outcome::equality("", "", &lhs9, &a9, 0.0, 1e-8).passes());
    }

    #[test]
    fn split_state_mixed_identities() {
        let bg = cosine_bg(16);
        let grid = *bg.grid();
        let u = RealField::from_fn(grid, |x| 0.004 * (2.0 * PI * x[0]).sin() + 0.004 * (2.0 * PI * x[3]).cos());
        let s = Slice::on_background(&u, &bg, 0.5).unwrap();
        let b = verify_b(&s, &bg).unwrap();
        for o in &b {
            assert!(o.passes(), "{o:?}");
        }
    }

    #[test]
    fn mixed_identities_generic() {
        let bg = cosine_bg(16);
        let s = Slice::on_background(&generic_u(*bg.grid(), 0.01), &bg, 0.7).unwrap();
        for o in verify_b(&s, &bg).unwrap() {
            assert!(o.residual < 1e-4, "{o:?}");
        }
    }

    #[test]
    fn flat_background_has_no_torsion_terms() {
        let grid = TorusGrid::cube(16).unwrap();
        let bg = Background::flat(grid);
        let s = Slice::on_background(&generic_u(grid, 0.002), &bg, 0.5).unwrap();
        let f = Firsts::new(&s);
        let p = psi(&s, &f);
        let expect = (0.5 - 1.0) * &f.ez * &f.lw / (&s.eta * &s.lambda);
        assert!((&p - &expect).sup() <= 1e-15 * p.sup().max(1.0));
        let b = verify_b(&s, &bg).unwrap();
        assert!(by_name(&b, "B11").residual <= 1e-8, "{:?}", by_name(&b, "B11"));
        assert!(by_name(&b, "B23").passes());
    }
}
