use num_complex::Complex64;

use super::{mixed_norm_from, CheckRecord, CheckSeries, MonitorContext, PHI_GROWTH};
use crate::flow::{FlowState, Trajectory};
use crate::geometry::{Background, ConstantsReport};
use crate::grid::{ComplexField, Deriv, RealField};
use crate::error::Result;

/// Constant `c` in the time-difference tolerance `max(1e-6, c dt^2)`.
pub const LEMMA24_FD_CONSTANT: f64 = 1.0;

/// The Hermitian matrix `[[l + |q|^2/e, q/e], [conj(q)/e, 1/e]]` with
/// `l = g lambda`, `e = h eta` and `q = u_{z wbar}`. Its determinant is `l/e`.
#[derive(Debug, Clone)]
pub struct LegendreW {
    pub w11: RealField,
    pub w12: ComplexField,
    pub w22: RealField,
}

impl LegendreW {
    /// `sum_ij W_ij v_i conj(v_j)`.
    pub fn quadratic(&self, v: [Complex64; 2]) -> RealField {
        let (a, b) = (v[0], v[1]);
        let data = (0..self.w11.len())
            .map(|i| {
                a.norm_sqr() * self.w11.data()[i]
                    + 2.0 * (a * b.conj() * self.w12.data()[i]).re
                    + b.norm_sqr() * self.w22.data()[i]
            })
            .collect();
        RealField::new(*self.w11.grid(), data).expect("finite W")
    }

    pub fn det(&self) -> RealField {
        let data = (0..self.w11.len())
            .map(|i| self.w11.data()[i] * self.w22.data()[i] - self.w12.data()[i].norm_sqr())
            .collect();
        RealField::new(*self.w11.grid(), data).expect("finite det W")
    }
}

fn build_w(l: &[f64], e: &[f64], q: &ComplexField) -> LegendreW {
    let grid = *q.grid();
    let n = l.len();
    let mut w11 = vec![0.0; n];
    let mut w12 = vec![Complex64::default(); n];
    let mut w22 = vec![0.0; n];
    for i in 0..n {
        let qi = q.data()[i];
        w11[i] = l[i] + qi.norm_sqr() / e[i];
        w12[i] = qi / e[i];
        w22[i] = 1.0 / e[i];
    }
    LegendreW {
        w11: RealField::new(grid, w11).expect("finite W11"),
        w12: ComplexField::new(grid, w12).expect("W12 length"),
        w22: RealField::new(grid, w22).expect("finite W22"),
    }
}

/// W of a state, built from the cached traces.
pub fn legendre_w(state: &FlowState, bg: &Background) -> LegendreW {
    let q = state.u.deriv(Deriv::new(1, 0, 0, 1));
    let l = bg.g().mul(&state.lambda);
    let e = bg.h().mul(&state.eta);
    build_w(l.data(), e.data(), &q)
}

/// Second-order derivative in time at the middle of three samples with
/// arbitrary spacing.
pub fn fd_time_derivative(f: [&RealField; 3], t: [f64; 3]) -> RealField {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    let c0 = -h2 / (h1 * (h1 + h2));
    let c1 = (h2 - h1) / (h1 * h2);
    let c2 = h1 / (h2 * (h1 + h2));
    let data = (0..f[1].len())
        .map(|i| c0 * f[0].data()[i] + c1 * f[1].data()[i] + c2 * f[2].data()[i])
        .collect();
    RealField::new(*f[1].grid(), data).expect("finite difference")
}

/// `beta/(g lambda) phi_{z zbar} + 1/(h eta) phi_{w wbar}`.
pub fn linearized(state: &FlowState, bg: &Background, beta: f64, phi: &RealField) -> RealField {
    let (pz, pw) = phi.laplacians();
    let data = (0..phi.len())
        .map(|i| {
            beta / (bg.g().data()[i] * state.lambda.data()[i]) * pz.data()[i]
                + pw.data()[i] / (bg.h().data()[i] * state.eta.data()[i])
        })
        .collect();
    RealField::new(*phi.grid(), data).expect("finite L")
}

fn heat(triplet: [&FlowState; 3], fields: [&RealField; 3], bg: &Background, beta: f64) -> RealField {
    let dt = fd_time_derivative(fields, [triplet[0].t, triplet[1].t, triplet[2].t]);
    dt.sub(&linearized(triplet[1], bg, beta, fields[1]))
}

fn fd_tol(triplet: [&FlowState; 3], c: f64, scale: f64) -> f64 {
    let dt = (triplet[1].t - triplet[0].t).max(triplet[2].t - triplet[1].t);
    1e-6f64.max(c * dt * dt) * (1.0 + scale)
}

/// `H W(v, conj v) <= 0` on constant backgrounds, with `H` discretized by a
/// centered time difference and the spectral operator of the middle state.
pub fn check_lemma24(
    traj: &Trajectory,
    ctx: MonitorContext<'_>,
    vectors: &[[Complex64; 2]],
    c: f64,
) -> CheckSeries {
    if !ctx.bg.is_constant() {
        return CheckSeries::skipped("lemma24", "needs constant background coefficients");
    }
    let mut records = Vec::new();
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let Some(tr) = snap.triplet() else { continue };
        let ws: Vec<LegendreW> = tr.iter().map(|s| legendre_w(s, ctx.bg)).collect();
        let mut worst: Option<CheckRecord> = None;
        for &v in vectors {
            let q: Vec<RealField> = ws.iter().map(|w| w.quadratic(v)).collect();
            let hw = heat(tr, [&q[0], &q[1], &q[2]], ctx.bg, ctx.beta);
            let tol = fd_tol(tr, c, q[1].sup_norm());
            let rec = CheckRecord::upper(i, tr[1].t, hw.max(), 0.0, tol);
            if worst.as_ref().map_or(true, |w| rec.slack() < w.slack()) {
                worst = Some(rec);
            }
        }
        records.extend(worst);
    }
    CheckSeries::new("lemma24", records)
}

/// `det W == lambda / eta` with W rebuilt from the potential itself, against
/// the traces cached in the state.
pub fn check_lemma24_det(traj: &Trajectory, ctx: MonitorContext<'_>) -> CheckSeries {
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, snap)| {
            let st = &snap.state;
            let spec = st.u.spectrum();
            let (uzz, uww) = spec.real_pair(Deriv::ZZBAR, Deriv::WWBAR);
            let q = spec.derivative(Deriv::new(1, 0, 0, 1));
            let l = bg_add(ctx.bg.g(), &uzz, 1.0);
            let e = bg_add(ctx.bg.h(), &uww, -1.0);
            let det = build_w(l.data(), e.data(), &q).det();
            let mut worst = 0.0f64;
            for j in 0..det.len() {
                let cached = ctx.bg.g().data()[j] * st.lambda.data()[j]
                    / (ctx.bg.h().data()[j] * st.eta.data()[j]);
                worst = worst.max((det.data()[j] - cached).abs() / cached.abs());
            }
            CheckRecord::upper(i, st.t, worst, 0.0, 1e-12)
        })
        .collect();
    CheckSeries::new("lemma24_det", records)
}

fn bg_add(coef: &RealField, d: &RealField, sign: f64) -> RealField {
    coef.zip_map(d, |c, d| c + sign * d)
}

/// `log lambda + A (1/lambda + 1/eta) + B |nu|^2`.
pub fn phi_field(state: &FlowState, bg: &Background, beta: f64, a: f64, b: f64) -> Result<RealField> {
    let uzw = state.u.deriv(Deriv::new(1, 0, 1, 0));
    let nu = mixed_norm_from(&uzw, state, bg, beta);
    let data = (0..nu.len())
        .map(|i| {
            let (l, e) = (state.lambda.data()[i], state.eta.data()[i]);
            l.ln() + a * (1.0 / l + 1.0 / e) + b * nu.data()[i]
        })
        .collect();
    RealField::new(*nu.grid(), data)
}

/// Three gates for the test function `Phi`:
/// the inequality `H Phi <= C14 Phi` at the spatial maximum of `Phi`, the
/// pointwise bound `H Phi <= k0 + k2 |nu|^2` it is derived from, and the
/// resulting growth `max Phi(t) <= max Phi(0) e^{C14 t}`.
pub fn check_phi(
    traj: &Trajectory,
    ctx: MonitorContext<'_>,
    consts: &ConstantsReport,
    c: f64,
) -> Vec<CheckSeries> {
    let p = match consts.prop11() {
        Ok(p) => *p,
        Err(e) => {
            let reason = e.to_string();
            return vec![
                CheckSeries::skipped("phi_argmax", reason.clone()),
                CheckSeries::skipped("phi_pointwise", reason.clone()),
                CheckSeries::skipped(PHI_GROWTH, reason),
            ];
        }
    };
    if ctx.forcing.is_some_and(|f| f.sup_norm() > 0.0) {
        let reason = "needs the reduced (unforced) problem";
        return vec![
            CheckSeries::skipped("phi_argmax", reason),
            CheckSeries::skipped("phi_pointwise", reason),
            CheckSeries::skipped(PHI_GROWTH, reason),
        ];
    }
    let (beta, bg) = (ctx.beta, ctx.bg);
    let phi = |s: &FlowState| phi_field(s, bg, beta, p.a, p.b);
    let nu = |s: &FlowState| mixed_norm_from(&s.u.deriv(Deriv::new(1, 0, 1, 0)), s, bg, beta);

    let mut argmax = Vec::new();
    let mut pointwise = Vec::new();
    let mut growth = Vec::new();
    let phi0_max = match phi(traj.initial()) {
        Ok(f) => f.max(),
        Err(e) => {
            let reason = format!("initial state: {e}");
            return vec![
                CheckSeries::skipped("phi_argmax", reason.clone()),
                CheckSeries::skipped("phi_pointwise", reason.clone()),
                CheckSeries::skipped(PHI_GROWTH, reason),
            ];
        }
    };
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let t = snap.state.t - traj.initial().t;
        let bound = phi0_max * (p.c14 * t).exp();
        // a non-admissible snapshot has no finite Phi and fails the growth gate
        let Ok(mid_phi) = phi(&snap.state) else {
            growth.push(CheckRecord::upper(i, snap.state.t, f64::NAN, bound, 0.0));
            continue;
        };
        let tol = 1e-8 * (1.0 + mid_phi.sup_norm());
        growth.push(CheckRecord::upper(i, snap.state.t, mid_phi.max(), bound, tol));

        let Some(tr) = snap.triplet() else { continue };
        let (Ok(prev_phi), Ok(next_phi)) = (phi(tr[0]), phi(tr[2])) else { continue };
        let h = heat(tr, [&prev_phi, &mid_phi, &next_phi], bg, beta);
        let tol = fd_tol(tr, c, mid_phi.sup_norm());

        let k = mid_phi.argmax();
        argmax.push(CheckRecord::upper(i, tr[1].t, h.data()[k], p.c14 * mid_phi.data()[k], tol));

        let n = nu(tr[1]);
        let mut worst = CheckRecord::upper(i, tr[1].t, h.data()[0], p.k0 + p.k2 * n.data()[0], tol);
        for j in 1..h.len() {
            let r = CheckRecord::upper(i, tr[1].t, h.data()[j], p.k0 + p.k2 * n.data()[j], tol);
            if r.slack() < worst.slack() {
                worst = r;
            }
        }
        pointwise.push(worst);
    }
    vec![
        CheckSeries::new("phi_argmax", argmax),
        CheckSeries::new("phi_pointwise", pointwise),
        CheckSeries::new(PHI_GROWTH, growth),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::DEFAULT_FLOOR;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    #[test]
    fn fd_is_exact_for_quadratics() {
        let grid = TorusGrid::cube(8).unwrap();
        let t = [0.1, 0.13, 0.18];
        let f: Vec<RealField> = t.iter().map(|&s| RealField::constant(grid, 3.0 * s * s - s)).collect();
        let d = fd_time_derivative([&f[0], &f[1], &f[2]], t);
        approx::assert_abs_diff_eq!(d.max(), 6.0 * 0.13 - 1.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(d.min(), 6.0 * 0.13 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn det_w_matches_lambda_over_eta() {
        let grid = TorusGrid::cube(16).unwrap();
        let bg = Background::flat(grid);
        let u = RealField::from_fn(grid, |x| {
            0.01 * (2.0 * PI * x[0]).sin() * (2.0 * PI * (x[2] + x[3])).cos() + 0.02 * (2.0 * PI * x[1]).cos()
        });
        let s = FlowState::new(u, 0.0, &bg, 0.5, None, DEFAULT_FLOOR).unwrap();
        let w = legendre_w(&s, &bg);
        let det = w.det();
        for i in 0..grid.len() {
            let expect = s.lambda.data()[i] / s.eta.data()[i];
            assert!((det.data()[i] - expect).abs() <= 1e-12 * expect);
        }
        // Positive definite on admissible states.
        assert!(w.w11.min() > 0.0 && det.min() > 0.0);
    }

    #[test]
    fn stationary_state_has_zero_heat() {
        let grid = TorusGrid::cube(8).unwrap();
        let bg = Background::flat(grid);
        let mk = |t| FlowState::new(RealField::zeros(grid), t, &bg, 0.5, None, DEFAULT_FLOOR).unwrap();
        let tr = [mk(0.0), mk(0.1), mk(0.2)];
        let w: Vec<RealField> = tr
            .iter()
            .map(|s| legendre_w(s, &bg).quadratic([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]))
            .collect();
        let h = heat([&tr[0], &tr[1], &tr[2]], [&w[0], &w[1], &w[2]], &bg, 0.5);
        assert_eq!(h.sup_norm(), 0.0);
    }
}
