//! Executable forms of the a-priori estimates, evaluated along a
//! trajectory.

mod checks;
mod fixtures;
mod legendre;

use serde::Serialize;

use crate::error::Result;
use crate::flow::{FlowState, Trajectory};
use crate::geometry::{constants, Background, ConstantOptions, ConstantsReport};
use crate::grid::{ComplexField, Deriv, RealField};

pub use checks::{
    c0_series, check_cor8, check_prop10, check_prop12, check_prop5, check_prop6, check_prop7,
    check_speed, prop7_bound, C0Series,
};
pub use fixtures::{corrupt, Corruption};
pub use legendre::{
    check_lemma24, check_lemma24_det, check_phi, fd_time_derivative, legendre_w, phi_field,
    LegendreW, LEMMA24_FD_CONSTANT,
};

/// Outcome of one check at one snapshot.
///
/// `margin` is the signed distance to the bound widened by `tol`, so
/// `pass == (margin >= 0)`. It is `None` when the bound is infinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub snapshot: usize,
    pub t: f64,
    pub bound: f64,
    pub observed: f64,
    pub tol: f64,
    pub margin: Option<f64>,
    pub pass: bool,
}

impl CheckRecord {
    /// `observed <= bound + tol`.
    pub fn upper(snapshot: usize, t: f64, observed: f64, bound: f64, tol: f64) -> Self {
        let margin = bound + tol - observed;
        Self::from_margin(snapshot, t, bound, observed, tol, margin)
    }

    /// `observed >= bound - tol`.
    pub fn lower(snapshot: usize, t: f64, observed: f64, bound: f64, tol: f64) -> Self {
        let margin = observed - (bound - tol);
        Self::from_margin(snapshot, t, bound, observed, tol, margin)
    }

    /// Margin with infinite bounds mapped to `+inf`, for ordering.
    pub fn slack(&self) -> f64 {
        self.margin.unwrap_or(if self.pass { f64::INFINITY } else { f64::NEG_INFINITY })
    }

    fn from_margin(snapshot: usize, t: f64, bound: f64, observed: f64, tol: f64, margin: f64) -> Self {
        let pass = if margin.is_nan() {
            // infinite bound against a finite observation
            bound.is_infinite() && observed.is_finite()
        } else {
            margin >= 0.0
        };
        Self {
            snapshot,
            t,
            bound,
            observed,
            tol,
            margin: margin.is_finite().then_some(margin),
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSeries {
    pub name: &'static str,
    pub skipped: Option<String>,
    pub records: Vec<CheckRecord>,
}

impl CheckSeries {
    pub fn new(name: &'static str, records: Vec<CheckRecord>) -> Self {
        Self {
            name,
            skipped: None,
            records,
        }
    }

    pub fn skipped(name: &'static str, reason: impl Into<String>) -> Self {
        Self {
            name,
            skipped: Some(reason.into()),
            records: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn worst_margin(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.margin)
            .min_by(f64::total_cmp)
    }

    pub fn first_failure(&self) -> Option<f64> {
        self.records.iter().find(|r| !r.pass).map(|r| r.t)
    }

    pub fn record_at(&self, snapshot: usize) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.snapshot == snapshot)
    }
}

/// Names of every check, in report order.
pub const CHECK_NAMES: [&str; 12] = [
    "speed",
    "prop5_monotone",
    "prop5_comparability",
    "prop6",
    "prop7",
    "cor8",
    "prop10",
    "prop12",
    "lemma24",
    "lemma24_det",
    "phi_argmax",
    "phi_pointwise",
];

/// Growth of the Φ maximum; listed separately since it is a whole-run check.
pub const PHI_GROWTH: &str = "phi_growth";

#[derive(Debug, Clone, Serialize)]
pub struct MonitorConfig {
    pub enabled: Vec<String>,
    pub safety: f64,
    pub sample_vectors: Vec<[num_complex::Complex64; 2]>,
    /// Constant `c` of the time-difference tolerance `max(1e-6, c dt^2)`.
    pub fd_constant: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64| num_complex::Complex64::new(re, 0.0);
        Self {
            enabled: all_checks(),
            safety: 1.0,
            sample_vectors: vec![[c(1.0), c(0.0)], [c(0.0), c(1.0)], [c(s), c(s)]],
            fd_constant: LEMMA24_FD_CONSTANT,
        }
    }
}

pub fn all_checks() -> Vec<String> {
    CHECK_NAMES
        .iter()
        .chain(std::iter::once(&PHI_GROWTH))
        .map(|s| s.to_string())
        .collect()
}

/// What the monitors need besides the trajectory.
#[derive(Debug, Clone, Copy)]
pub struct MonitorContext<'a> {
    pub bg: &'a Background,
    pub beta: f64,
    pub forcing: Option<&'a RealField>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorSuite {
    pub constants: ConstantsReport,
    pub c0: C0Series,
    pub checks: Vec<CheckSeries>,
}

impl MonitorSuite {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&CheckSeries> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Records of all checks at one snapshot, in check order.
    pub fn report_at(&self, snapshot: usize, t: f64) -> MonitorReport {
        MonitorReport {
            t,
            records: self
                .checks
                .iter()
                .filter_map(|c| c.record_at(snapshot).map(|r| (c.name, r.clone())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub t: f64,
    pub records: Vec<(&'static str, CheckRecord)>,
}

/// `beta |u_{zw}|^2 / (g lambda h eta)`, the squared norm of the mixed
/// derivative in the adjusted metric.
pub fn mixed_norm(state: &FlowState, bg: &Background, beta: f64) -> RealField {
    let uzw = state.u.deriv(Deriv::new(1, 0, 1, 0));
    mixed_norm_from(&uzw, state, bg, beta)
}

pub(crate) fn mixed_norm_from(uzw: &ComplexField, state: &FlowState, bg: &Background, beta: f64) -> RealField {
    let n = uzw.data().len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let denom = bg.g().data()[i] * state.lambda.data()[i] * bg.h().data()[i] * state.eta.data()[i];
        *o = beta * uzw.data()[i].norm_sqr() / denom;
    }
    RealField::new(*bg.grid(), out).expect("finite mixed norm on admissible state")
}

/// Runs every enabled check. `C0` fed into the constants is the running
/// maximum of `sup (1/lambda + 1/eta)` over the whole trajectory.
pub fn evaluate(traj: &Trajectory, ctx: MonitorContext<'_>, cfg: &MonitorConfig) -> Result<MonitorSuite> {
    let c0 = c0_series(traj);
    let consts = constants(
        ctx.bg,
        ctx.beta,
        c0.running_max.last().copied().unwrap_or(2.0),
        ConstantOptions { safety: cfg.safety },
    )?;
    let on = |name: &str| cfg.enabled.iter().any(|e| e == name);
    let mut out = Vec::new();
    if on("speed") {
        out.push(check_speed(traj, ctx));
    }
    if on("prop5_monotone") || on("prop5_comparability") {
        let (mono, comp) = check_prop5(traj, ctx);
        if on("prop5_monotone") {
            out.push(mono);
        }
        if on("prop5_comparability") {
            out.push(comp);
        }
    }
    if on("prop6") {
        out.push(check_prop6(traj, ctx));
    }
    if on("prop7") {
        out.push(check_prop7(traj, ctx, &consts));
    }
    if on("cor8") {
        out.push(check_cor8(traj, ctx));
    }
    if on("prop10") {
        out.push(check_prop10(traj, ctx, &consts));
    }
    if on("prop12") {
        out.push(check_prop12(traj, ctx, &consts));
    }
    if on("lemma24") {
        out.push(check_lemma24(traj, ctx, &cfg.sample_vectors, cfg.fd_constant));
    }
    if on("lemma24_det") {
        out.push(check_lemma24_det(traj, ctx));
    }
    if on("phi_argmax") || on("phi_pointwise") || on(PHI_GROWTH) {
        for series in check_phi(traj, ctx, &consts, cfg.fd_constant) {
            if on(series.name) {
                out.push(series);
            }
        }
    }
    Ok(MonitorSuite {
        constants: consts,
        c0,
        checks: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowState, DEFAULT_FLOOR};
    use crate::grid::TorusGrid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn record_margins() {
        let r = CheckRecord::upper(0, 0.0, 1.0, 2.0, 0.1);
        assert!(r.pass);
        assert_abs_diff_eq!(r.margin.unwrap(), 1.1);
        let r = CheckRecord::lower(0, 0.0, 1.0, 2.0, 0.1);
        assert!(!r.pass);
        let r = CheckRecord::upper(0, 0.0, 5.0, f64::INFINITY, 0.0);
        assert!(r.pass && r.margin.is_none());
    }

    #[test]
    fn mixed_norm_examples() {
        let grid = TorusGrid::cube(16).unwrap();
        let bg = Background::flat(grid);
        let split = RealField::from_fn(grid, |x| 0.02 * (2.0 * PI * x[0]).sin() + 0.01 * (2.0 * PI * x[3]).cos());
        let s = FlowState::new(split, 0.0, &bg, 1.0, None, DEFAULT_FLOOR).unwrap();
        assert!(mixed_norm(&s, &bg, 1.0).sup_norm() < 1e-24);

        let eps = 0.01;
        let u = RealField::from_fn(grid, |x| eps * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).sin());
        let s = FlowState::new(u, 0.0, &bg, 1.0, None, DEFAULT_FLOOR).unwrap();
        let m1 = mixed_norm(&s, &bg, 1.0);
        for i in 0..grid.len() {
            let x = grid.point(i);
            let uzw = eps * PI * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[2]).cos();
            let expect = uzw * uzw / (s.lambda.data()[i] * s.eta.data()[i]);
            assert_abs_diff_eq!(m1.data()[i], expect, epsilon = 1e-14);
        }
        let m_half = mixed_norm(&s, &bg, 0.5);
        assert!(m_half.sub(&m1.scale(0.5)).sup_norm() < 1e-18);
    }
}
