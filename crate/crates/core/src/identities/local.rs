//! Identities of the local equation `du/dt = beta log u_{z zbar} - log(-u_{w wbar})`
//! for `u = a|z|^2 - b|w|^2 + p` with periodic `p`, which feed the
//! subsolution property of the Legendre matrix `W`.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{Deriv, RealField};

use super::algebra::Field;
use super::expr::{heat, Expr};
use super::slice::Slice;
use super::{Outcome, EQUALITY_TOL, INEQUALITY_TOL, ROUNDOFF_TOL};

#[derive(Debug, Clone)]
pub struct LocalForm {
    pub a: f64,
    pub b: f64,
    pub perturbation: RealField,
}

impl LocalForm {
    /// Errors when `a + p_{z zbar}` or `b - p_{w wbar}` fails to be positive.
    pub fn slice(&self, beta: f64) -> Result<Slice> {
        Slice::local(&self.perturbation, self.a, self.b, beta)
    }
}

/// Sample directions for `W(v, conj v)`.
pub const SAMPLE_VECTORS: [[Complex64; 2]; 4] = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    [
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ],
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
];

const Z: Deriv = Deriv::Z;
const ZB: Deriv = Deriv::ZBAR;
const W: Deriv = Deriv::W;
const WB: Deriv = Deriv::WBAR;

fn dir_name(d: Deriv) -> &'static str {
    match (d.z, d.zbar, d.w, d.wbar) {
        (1, 0, 0, 0) => "z",
        (0, 1, 0, 0) => "zbar",
        (0, 0, 1, 0) => "w",
        _ => "wbar",
    }
}

const EQ_HDU: &str = "H (du/dt) = 0";
const EQ_C27: &str = "H u_ij = -beta lambda_i lambda_j/lambda^2 + eta_i eta_j/eta^2";
const EQ_C28: &str = "H lambda = -beta |lambda_z/lambda|^2 + |eta_z/eta|^2";
const EQ_C29: &str = "H u_{z wbar} = -beta lambda_z lambda_wbar/lambda^2 + eta_z eta_wbar/eta^2";
const EQ_C30: &str = "H eta = beta |lambda_w/lambda|^2 - |eta_w/eta|^2";
const EQ_C31: &str = "H (1/eta) = -beta/eta^2 |lambda_w/lambda|^2 - 2 beta/(lambda eta) |eta_z/eta|^2 - 1/eta^2 |eta_w/eta|^2";
const EQ_C32: &str = "H |u_{z wbar}|^2 = -2 beta/lambda^2 Re(u_{zbar w} lambda_z lambda_wbar) + 2/eta^2 Re(u_{zbar w} eta_z eta_wbar) \
                      - beta/lambda (|lambda_w|^2 + |u_{z z wbar}|^2) - 1/eta (|u_{w w zbar}|^2 + |eta_z|^2)";
const EQ_C33: &str = "H (|q|^2/eta) = 2/eta^3 Re(conj q eta_z eta_wbar) - beta/(lambda eta)(|lambda_w|^2 + |u_{z z wbar}|^2) \
                      - 1/eta^2 (|u_{w w zbar}|^2 + |eta_z|^2) + |q|^2 H(1/eta) - 2 beta/(lambda^2 eta) Re(conj q lambda_z lambda_wbar) \
                      - 2 beta/lambda Re((|q|^2)_z (1/eta)_zbar) - 2/eta Re((|q|^2)_w (1/eta)_wbar), q = u_{z wbar}";
const EQ_C34_GRAD: &str = "(|q|^2)_z = conj q u_{z z wbar} + lambda_w q, (|q|^2)_w = q u_{w w zbar} - conj q eta_z";
const EQ_C34: &str = "H (|q|^2/eta) = -beta/(lambda eta)(|lambda_w|^2 + |u_{z z wbar}|^2) - 1/eta^2 (|u_{w w zbar}|^2 + |eta_z|^2) \
                      + |q|^2 H(1/eta) - 2 beta/(lambda^2 eta) Re(conj q lambda_z lambda_wbar) + 2/eta^3 Re(conj q eta_z eta_wbar) \
                      + 2 beta/lambda Re((conj q u_{z z wbar} + lambda_w q) eta_zbar/eta^2) \
                      + 2/eta Re((q u_{w w zbar} - conj q eta_z) eta_wbar/eta^2)";
const EQ_C35: &str = "H (lambda + |q|^2/eta) = -beta |lambda_z/lambda + q lambda_w/(lambda eta)|^2 \
                      - beta |lambda_w/sqrt(lambda eta) - conj q eta_z/sqrt(lambda eta^3)|^2 \
                      - beta |u_{z z wbar}/sqrt(lambda eta) - q eta_z/sqrt(lambda eta^3)|^2 \
                      - |u_{w w zbar}/eta - conj q eta_w/eta^2|^2";
const EQ_C36: &str = "H (q/eta) = -beta lambda_z lambda_wbar/(lambda^2 eta) + eta_z eta_wbar/eta^3 + q H(1/eta) \
                      + beta/lambda (lambda_wbar eta_z/eta^2 + eta_zbar u_{z z wbar}/eta^2) \
                      + 1/eta (u_{z wbar wbar} eta_w/eta^2 - eta_z eta_wbar/eta^2)";
const EQ_C37: &str = "H (q/eta) = beta eta_zbar/sqrt(lambda eta^3) (u_{z z wbar}/sqrt(lambda eta) - q eta_z/sqrt(lambda eta^3)) \
                      + (u_{z wbar wbar}/eta - q eta_wbar/eta^2) eta_w/eta^2 \
                      - beta (lambda_z/lambda + q lambda_w/(lambda eta)) lambda_wbar/(lambda eta) \
                      + beta (lambda_wbar/sqrt(lambda eta) - q eta_zbar/sqrt(lambda eta^3)) eta_z/sqrt(lambda eta^3)";
const EQ_HW: &str = "H W(v, conj v) = |a|^2 H(lambda + |q|^2/eta) + 2 Re(a conj b H(q/eta)) + |b|^2 H(1/eta) \
                     with the completed-square right-hand sides";
const EQ_HW_SIGN: &str = "completed-square form of H W(v, conj v) <= 0";

/// Pieces of the local identities shared between several right-hand sides.
pub(super) struct LocalTerms {
    pub lz: Field,
    pub lw: Field,
    pub ez: Field,
    pub ew: Field,
    pub q: Field,
    pub uzzwb: Field,
    pub uwwzb: Field,
    pub uzwbwb: Field,
}

impl LocalTerms {
    pub fn new(s: &Slice) -> Self {
        Self {
            lz: s.dlambda(Z),
            lw: s.dlambda(W),
            ez: s.deta(Z),
            ew: s.deta(W),
            q: s.du(Deriv::new(1, 0, 0, 1)),
            uzzwb: s.du(Deriv::new(2, 0, 0, 1)),
            uwwzb: s.du(Deriv::new(0, 1, 2, 0)),
            uzwbwb: s.du(Deriv::new(1, 0, 0, 2)),
        }
    }

    fn dlam(&self, d: Deriv) -> Field {
        match dir_name(d) {
            "z" => self.lz.clone(),
            "zbar" => self.lz.conj(),
            "w" => self.lw.clone(),
            _ => self.lw.conj(),
        }
    }

    fn deta(&self, d: Deriv) -> Field {
        match dir_name(d) {
            "z" => self.ez.clone(),
            "zbar" => self.ez.conj(),
            "w" => self.ew.clone(),
            _ => self.ew.conj(),
        }
    }

    /// Right-hand side of the heat operator on `1/eta`.
    pub fn heat_inv_eta(&self, s: &Slice) -> Field {
        let beta = s.beta();
        let (lam, eta) = (&s.lambda, &s.eta);
        let eta2 = eta * eta;
        -beta / &eta2 * (&self.lw / lam).abs2()
            - 2.0 * beta / (lam * eta) * (&self.ez / eta).abs2()
            - 1.0 / &eta2 * (&self.ew / eta).abs2()
    }

    /// Right-hand side of the heat operator on `lambda + |q|^2/eta`, as four
    /// negated squares.
    pub fn heat_w11(&self, s: &Slice, second_weight: f64) -> Field {
        let beta = s.beta();
        let (lam, eta, q) = (&s.lambda, &s.eta, &self.q);
        let le = (lam * eta).sqrt();
        let le3 = (lam * eta * eta * eta).sqrt();
        let x1 = &self.lz / lam + q * &self.lw / (lam * eta);
        let x2 = &self.lw / &le - q.conj() * &self.ez / &le3;
        let x3 = &self.uzzwb / &le - q * &self.ez / &le3;
        let x4 = &self.uwwzb / eta - q.conj() * &self.ew / (eta * eta);
        -beta * x1.abs2() - second_weight * x2.abs2() - beta * x3.abs2() - x4.abs2()
    }

    /// Right-hand side of the heat operator on `q/eta` in grouped form.
    pub fn heat_w12(&self, s: &Slice) -> Field {
        let beta = s.beta();
        let (lam, eta, q) = (&s.lambda, &s.eta, &self.q);
        let le = (lam * eta).sqrt();
        let le3 = (lam * eta * eta * eta).sqrt();
        let (ezb, lwb, ewb) = (self.ez.conj(), self.lw.conj(), self.ew.conj());
        beta * &ezb / &le3 * (&self.uzzwb / &le - q * &self.ez / &le3)
            + (&self.uzwbwb / eta - q * &ewb / (eta * eta)) * &self.ew / (eta * eta)
            - beta * (&self.lz / lam + q * &self.lw / (lam * eta)) * &lwb / (lam * eta)
            + beta * (&lwb / &le - q * &ezb / &le3) * &self.ez / &le3
    }
}

/// Identities of the local equation, the expansion of `H W(v, conj v)` and
/// its sign, on a slice built by [`LocalForm::slice`].
pub fn verify_c(s: &Slice) -> Result<Vec<Outcome>> {
    let beta = s.beta();
    let t = LocalTerms::new(s);
    let (lam, eta, q) = (&s.lambda, &s.eta, &t.q);
    let zero = Field::constant(*s.grid(), 0.0);
    let mut out = Vec::new();

    let speed = Expr::sum([
        Expr::scaled(beta, Expr::log(Expr::Lambda)),
        Expr::scaled(-1.0, Expr::log(Expr::Eta)),
    ]);
    let lf = s.lop(&s.speed);
    out.push(Outcome::equality("C_H_du_dt", EQ_HDU, &heat(&speed, s)?, &zero, lf.sup(), ROUNDOFF_TOL));

    for (i, j) in [(Z, W), (Z, ZB), (W, WB), (Z, WB), (ZB, W)] {
        let lhs = heat(&Expr::U(i.then(j)), s)?;
        let rhs = -beta * t.dlam(i) * t.dlam(j) / (lam * lam) + t.deta(i) * t.deta(j) / (eta * eta);
        out.push(Outcome::equality(
            format!("C27[{},{}]", dir_name(i), dir_name(j)),
            EQ_C27,
            &lhs,
            &rhs,
            0.0,
            EQUALITY_TOL,
        ));
    }

    let c28 = -beta * (&t.lz / lam).abs2() + (&t.ez / eta).abs2();
    out.push(Outcome::equality("C28", EQ_C28, &heat(&Expr::Lambda, s)?, &c28, 0.0, EQUALITY_TOL));

    let h_q = heat(&Expr::U(Deriv::new(1, 0, 0, 1)), s)?;
    let c29 = -beta * &t.lz * t.lw.conj() / (lam * lam) + &t.ez * t.ew.conj() / (eta * eta);
    out.push(Outcome::equality("C29", EQ_C29, &h_q, &c29, 0.0, EQUALITY_TOL));

    let c30 = beta * (&t.lw / lam).abs2() - (&t.ew / eta).abs2();
    out.push(Outcome::equality("C30", EQ_C30, &heat(&Expr::Eta, s)?, &c30, 0.0, EQUALITY_TOL));

    let h_inv_eta = heat(&Expr::recip(Expr::Eta), s)?;
    let c31 = t.heat_inv_eta(s);
    out.push(Outcome::equality("C31", EQ_C31, &h_inv_eta, &c31, 0.0, EQUALITY_TOL));

    let q_expr = Expr::U(Deriv::new(1, 0, 0, 1));
    let q2_expr = Expr::abs_sq(q_expr.clone());
    let q2 = q.abs2();
    let qb = q.conj();
    let (lzlwb, ezewb) = (&t.lz * t.lw.conj(), &t.ez * t.ew.conj());
    let c32 = -2.0 * beta / (lam * lam) * (&qb * &lzlwb).re() + 2.0 / (eta * eta) * (&qb * &ezewb).re()
        - beta / lam * (t.lw.abs2() + t.uzzwb.abs2())
        - 1.0 / eta * (t.uwwzb.abs2() + t.ez.abs2());
    out.push(Outcome::equality("C32", EQ_C32, &heat(&q2_expr, s)?, &c32, 0.0, EQUALITY_TOL));

    let x2_expr = Expr::product([q2_expr.clone(), Expr::recip(Expr::Eta)]);
    let h_x2 = heat(&x2_expr, s)?;
    let inv_eta = eta.recip();
    let q2z = q2.d(Z);
    let q2w = q2.d(W);
    let eta3 = eta * eta * eta;
    let shared = -beta / (lam * eta) * (t.lw.abs2() + t.uzzwb.abs2())
        - 1.0 / (eta * eta) * (t.uwwzb.abs2() + t.ez.abs2())
        + &q2 * &c31
        - 2.0 * beta / (lam * lam * eta) * (&qb * &lzlwb).re()
        + 2.0 / &eta3 * (&qb * &ezewb).re();
    let c33 = &shared
        - 2.0 * beta / lam * (&q2z * inv_eta.d(ZB)).re()
        - 2.0 / eta * (&q2w * inv_eta.d(WB)).re();
    out.push(Outcome::equality("C33", EQ_C33, &h_x2, &c33, 0.0, EQUALITY_TOL));

    let grad_z = &qb * &t.uzzwb + &t.lw * q;
    let grad_w = q * &t.uwwzb - &qb * &t.ez;
    out.push(Outcome::equality_pairs(
        "C34_grad",
        EQ_C34_GRAD,
        &[(&q2z, &grad_z), (&q2w, &grad_w)],
        0.0,
        EQUALITY_TOL,
    ));
    let c34 = &shared
        + 2.0 * beta / lam * (&grad_z * t.ez.conj() / (eta * eta)).re()
        + 2.0 / eta * (&grad_w * t.ew.conj() / (eta * eta)).re();
    out.push(Outcome::equality("C34", EQ_C34, &h_x2, &c34, 0.0, EQUALITY_TOL));

    let w11_expr = Expr::sum([Expr::Lambda, x2_expr]);
    let h_w11 = heat(&w11_expr, s)?;
    let c35 = t.heat_w11(s, beta);
    out.push(Outcome::equality("C35", EQ_C35, &h_w11, &c35, 0.0, EQUALITY_TOL));

    let w12_expr = Expr::product([q_expr, Expr::recip(Expr::Eta)]);
    let h_w12 = heat(&w12_expr, s)?;
    let c36 = -beta * &lzlwb / (lam * lam * eta) + &ezewb / &eta3 + q * &c31
        + beta / lam * (t.lw.conj() * &t.ez / (eta * eta) + t.ez.conj() / (eta * eta) * &t.uzzwb)
        + 1.0 / eta * (&t.uzwbwb * &t.ew / (eta * eta) - &ezewb / (eta * eta));
    out.push(Outcome::equality("C36", EQ_C36, &h_w12, &c36, 0.0, EQUALITY_TOL));
    let c37 = t.heat_w12(s);
    out.push(Outcome::equality("C37", EQ_C37, &h_w12, &c37, 0.0, EQUALITY_TOL));

    for (k, v) in SAMPLE_VECTORS.iter().enumerate() {
        let [a, b] = *v;
        let ab = a * b.conj();
        let lhs = a.norm_sqr() * &h_w11 + 2.0 * (h_w12.map(|z| z * ab)).re() + b.norm_sqr() * &h_inv_eta;
        let form = a.norm_sqr() * &c35 + 2.0 * (c37.map(|z| z * ab)).re() + b.norm_sqr() * &c31;
        out.push(Outcome::equality(format!("HW[{k}]"), EQ_HW, &lhs, &form, 0.0, EQUALITY_TOL));
        out.push(Outcome::upper(format!("HW_sign[{k}]"), EQ_HW_SIGN, &form, &zero, INEQUALITY_TOL));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    fn form(n: usize, amp: f64, a: f64, b: f64) -> LocalForm {
        let grid = TorusGrid::cube(n).unwrap();
        LocalForm {
            a,
            b,
            perturbation: RealField::from_fn(grid, |x| amp * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).sin()),
        }
    }

    #[test]
    fn unperturbed_form_is_trivial() {
        let s = form(8, 0.0, 1.0, 1.0).slice(0.7).unwrap();
        for o in verify_c(&s).unwrap() {
            assert!(o.residual <= 1e-10, "{o:?}");
        }
    }

    #[test]
    fn perturbed_form_identities() {
        let s = form(32, 0.02, 1.0, 1.0).slice(0.7).unwrap();
        for o in verify_c(&s).unwrap() {
            assert!(o.passes(), "{o:?}");
        }
    }

    #[test]
    fn unit_weight_on_second_square_fails_below_one() {
        let s = form(16, 0.02, 1.0, 1.0).slice(0.5).unwrap();
        let t = LocalTerms::new(&s);
        let w11 = Expr::sum([
            Expr::Lambda,
            Expr::product([Expr::abs_sq(Expr::U(Deriv::new(1, 0, 0, 1))), Expr::recip(Expr::Eta)]),
        ]);
        let lhs = heat(&w11, &s).unwrap();
        let unit = Outcome::equality("", "", &lhs, &t.heat_w11(&s, 1.0), 0.0, 1e-8);
        let weighted = Outcome::equality("", "", &lhs, &t.heat_w11(&s, 0.5), 0.0, 1e-8);
        assert!(unit.residual > 1e-3, "{unit:?}");
        assert!(weighted.residual < 1e-6, "{weighted:?}");

        let s1 = form(16, 0.02, 1.0, 1.0).slice(1.0).unwrap();
        let t1 = LocalTerms::new(&s1);
        let lhs1 = heat(&w11, &s1).unwrap();
        assert!(Outcome::equality("", "", &lhs1, &t1.heat_w11(&s1, 1.0), 0.0, 1e-6).passes());
    }

    #[test]
    fn inadmissible_form_is_rejected() {
        assert!(form(8, 0.5, 0.1, 1.0).slice(0.5).is_err());
        assert!(form(8, 0.0, -1.0, 1.0).slice(0.5).is_err());
    }
}
