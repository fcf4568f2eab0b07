//! Time integration of `u_t = beta log lambda - log eta (- f)`.

mod reduce;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{RealField, Spectrum};

pub use reduce::{gauge_out_f, normalize_compat, normalize_exponents, shift_min_zero, Gauge, Normalized};

pub const DEFAULT_FLOOR: f64 = 1e-10;
const MAX_RETRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowParams {
    pub beta: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub steady_tol: f64,
    pub admissibility_floor: f64,
    pub snapshot_stride: usize,
    /// Attach states at `t - h` and `t + h` to every snapshot after the
    /// first, for centered time differences.
    pub fd_triplets: bool,
    /// `h` as a fraction of the stability step `1/rho`; the stiffest modes
    /// contribute `(rho h)^2 / 6` relative error to the difference.
    pub fd_fraction: f64,
    /// Extra times the integrator lands on exactly and snapshots.
    pub stop_times: Vec<f64>,
    pub max_steps: usize,
    /// Order of the optional exponential filter applied after each step.
    pub filter_order: Option<u32>,
}

impl FlowParams {
    pub fn new(beta: f64, t_end: f64) -> Self {
        Self {
            beta,
            cfl: 0.5,
            dt_max: 1e-2,
            t_end,
            steady_tol: 1e-9,
            admissibility_floor: DEFAULT_FLOOR,
            snapshot_stride: 1,
            fd_triplets: false,
            fd_fraction: 5e-2,
            stop_times: Vec::new(),
            max_steps: usize::MAX,
            filter_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta = {} outside (0, 1]", self.beta));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} outside (0, 1]", self.cfl));
        }
        for (name, v) in [
            ("dt_max", self.dt_max),
            ("steady_tol", self.steady_tol),
            ("admissibility_floor", self.admissibility_floor),
            ("fd_fraction", self.fd_fraction),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end = {} must be nonnegative", self.t_end));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be >= 1".into());
        }
        Ok(())
    }
}

/// `(lambda, eta) = (1 + u_{z zbar}/g, 1 - u_{w wbar}/h)`.
pub fn lambda_eta(u: &RealField, bg: &Background, floor: f64) -> Result<(RealField, RealField)> {
    let (lz, lw) = u.laplacians();
    traces(&lz, &lw, bg, floor)
}

fn traces(lz: &RealField, lw: &RealField, bg: &Background, floor: f64) -> Result<(RealField, RealField)> {
    let lambda = lz.zip_map(bg.g(), |d, g| 1.0 + d / g);
    let eta = lw.zip_map(bg.h(), |d, h| 1.0 - d / h);
    let (min_lambda, min_eta) = (lambda.min(), eta.min());
    // negated comparisons also catch NaN
    if !(min_lambda > floor) || !(min_eta > floor) {
        return Err(Error::AdmissibilityLost {
            t: f64::NAN,
            min_lambda,
            min_eta,
        });
    }
    Ok((lambda, eta))
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::AdmissibilityLost {
            min_lambda, min_eta, ..
        } => Error::AdmissibilityLost {
            t,
            min_lambda,
            min_eta,
        },
        other => other,
    }
}

/// `beta log lambda - log eta - f` pointwise.
pub fn speed(lambda: &RealField, eta: &RealField, beta: f64, forcing: Option<&RealField>) -> RealField {
    let mut out = lambda.zip_map(eta, |l, e| beta * l.ln() - e.ln());
    if let Some(f) = forcing {
        out = out.sub(f);
    }
    out
}

/// Flow speed at `u`, together with the traces it was computed from.
pub fn rhs(
    u: &RealField,
    bg: &Background,
    beta: f64,
    forcing: Option<&RealField>,
    floor: f64,
) -> Result<(RealField, RealField, RealField)> {
    let (lambda, eta) = lambda_eta(u, bg, floor)?;
    let f = speed(&lambda, &eta, beta, forcing);
    Ok((lambda, eta, f))
}

/// Snapshot of the flow. Immutable once built.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: RealField,
    pub t: f64,
    pub lambda: RealField,
    pub eta: RealField,
    pub du_dt: RealField,
}

impl FlowState {
    pub fn new(
        u: RealField,
        t: f64,
        bg: &Background,
        beta: f64,
        forcing: Option<&RealField>,
        floor: f64,
    ) -> Result<Self> {
        if u.grid() != bg.grid() {
            return Err(Error::Config("potential and background grids differ".into()));
        }
        let (lambda, eta, du_dt) = rhs(&u, bg, beta, forcing, floor).map_err(|e| at_time(e, t))?;
        Ok(Self {
            u,
            t,
            lambda,
            eta,
            du_dt,
        })
    }

    /// `||du_dt - mean(du_dt)||_inf`.
    pub fn steady_residual(&self) -> f64 {
        let m = self.du_dt.mean();
        self.du_dt.data().iter().fold(0.0, |acc, v| acc.max((v - m).abs()))
    }
}

/// Spectral radius of the linearized operator under the CFL convention.
pub fn stiffness(state: &FlowState, bg: &Background, beta: f64) -> f64 {
    use std::f64::consts::PI;
    let d = bg.grid().dims();
    let l = bg.grid().periods();
    let kappa = |a: usize, b: usize| {
        0.25 * ((PI * d[a] as f64 / l[a]).powi(2) + (PI * d[b] as f64 / l[b]).powi(2))
    };
    let az = state
        .lambda
        .zip_map(bg.g(), |lam, g| beta / (g * lam))
        .max();
    let aw = state.eta.zip_map(bg.h(), |eta, h| 1.0 / (h * eta)).max();
    az * kappa(0, 1) + aw * kappa(2, 3)
}

pub fn dt_adaptive(state: &FlowState, bg: &Background, beta: f64, cfl: f64, dt_max: f64) -> f64 {
    dt_max.min(cfl / stiffness(state, bg, beta))
}

fn axpy(u: &RealField, a: f64, k: &RealField) -> RealField {
    u.zip_map(k, |u, k| u + a * k)
}

/// One classical RK4 step. Any inadmissible stage rejects the step.
pub fn step_rk4(
    state: &FlowState,
    bg: &Background,
    params: &FlowParams,
    forcing: Option<&RealField>,
    dt: f64,
) -> Result<FlowState> {
    let beta = params.beta;
    let floor = params.admissibility_floor;
    let t = state.t;
    let stage = |u: &RealField, ts: f64| -> Result<RealField> {
        rhs(u, bg, beta, forcing, floor)
            .map(|r| r.2)
            .map_err(|e| at_time(e, ts))
    };
    let k1 = &state.du_dt;
    let k2 = stage(&axpy(&state.u, 0.5 * dt, k1), t + 0.5 * dt)?;
    let k3 = stage(&axpy(&state.u, 0.5 * dt, &k2), t + 0.5 * dt)?;
    let k4 = stage(&axpy(&state.u, dt, &k3), t + dt)?;
    let mut next: Vec<f64> = state.u.data().to_vec();
    let c = dt / 6.0;
    for (i, v) in next.iter_mut().enumerate() {
        *v += c * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
    }
    let mut u = RealField::new(*state.u.grid(), next).map_err(|_| Error::AdmissibilityLost {
        t: t + dt,
        min_lambda: f64::NAN,
        min_eta: f64::NAN,
    })?;
    if let Some(order) = params.filter_order {
        let mut s = Spectrum::of_real(&u);
        s.filter(order);
        u = s.to_real();
    }
    FlowState::new(u, t + dt, bg, beta, forcing, floor)
}

/// RK4 step with rejection: on admissibility loss `dt` is halved and the
/// step retried, at most eight times.
pub fn advance(
    state: &FlowState,
    bg: &Background,
    params: &FlowParams,
    forcing: Option<&RealField>,
    dt: f64,
) -> Result<(FlowState, f64)> {
    let mut dt = dt;
    let mut last = None;
    for _ in 0..=MAX_RETRIES {
        match step_rk4(state, bg, params, forcing, dt) {
            Ok(s) => return Ok((s, dt)),
            Err(e @ Error::AdmissibilityLost { .. }) => {
                last = Some(e);
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    /// Step size that produced this state (zero for the initial state).
    pub dt: f64,
    pub state: Arc<FlowState>,
    pub prev: Option<Arc<FlowState>>,
    pub next: Option<Arc<FlowState>>,
}

impl Snapshot {
    /// `(previous, current, next)` when both neighbours were recorded.
    pub fn triplet(&self) -> Option<[&FlowState; 3]> {
        Some([self.prev.as_deref()?, &self.state, self.next.as_deref()?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    TEnd,
    Steady,
    MaxSteps,
    AdmissibilityLost { t: f64, min_lambda: f64, min_eta: f64 },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::TEnd => "t_end",
            Termination::Steady => "steady",
            Termination::MaxSteps => "max_steps",
            Termination::AdmissibilityLost { .. } => "admissibility_lost",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::AdmissibilityLost { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: FlowParams,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub steps: usize,
    /// Last admissible state before a failure.
    pub last_state: Arc<FlowState>,
}

impl Trajectory {
    pub fn initial(&self) -> &FlowState {
        &self.snapshots[0].state
    }

    pub fn last(&self) -> &FlowState {
        &self.snapshots.last().expect("non-empty trajectory").state
    }
}

type Neighbours = (Option<Arc<FlowState>>, Option<Arc<FlowState>>);

/// Single RK4 steps of size `h` backward and forward from `state`.
fn probe(state: &FlowState, bg: &Background, params: &FlowParams, forcing: Option<&RealField>, h: f64) -> Neighbours {
    let back = step_rk4(state, bg, params, forcing, -h).ok();
    let fwd = step_rk4(state, bg, params, forcing, h).ok();
    match (back, fwd) {
        (Some(b), Some(f)) => (Some(Arc::new(b)), Some(Arc::new(f))),
        _ => (None, None),
    }
}

/// Integrates from `initial` until `t_end`, a steady state, or failure.
pub fn run(
    initial: FlowState,
    bg: &Background,
    params: &FlowParams,
    forcing: Option<&RealField>,
) -> Result<Trajectory> {
    params.validate()?;
    let t_tol = 1e-12 * params.t_end.max(1.0);
    let mut stops: Vec<f64> = params
        .stop_times
        .iter()
        .copied()
        .filter(|&s| s > initial.t + t_tol && s < params.t_end - t_tol)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.push(params.t_end);
    let mut stop_idx = 0;

    let mut state = Arc::new(initial);
    let mut snapshots = vec![Snapshot {
        step: 0,
        dt: 0.0,
        state: state.clone(),
        prev: None,
        next: None,
    }];
    let mut step = 0;
    let termination = loop {
        if state.steady_residual() < params.steady_tol {
            break Termination::Steady;
        }
        if state.t >= params.t_end - t_tol {
            break Termination::TEnd;
        }
        if step >= params.max_steps {
            break Termination::MaxSteps;
        }
        while stops[stop_idx] <= state.t + t_tol {
            stop_idx += 1;
        }
        let target = stops[stop_idx];
        let mut dt = dt_adaptive(&state, bg, params.beta, params.cfl, params.dt_max);
        let mut landing = false;
        if state.t + dt >= target - t_tol {
            dt = target - state.t;
            landing = true;
        }
        let (next, used) = match advance(&state, bg, params, forcing, dt) {
            Ok(r) => r,
            Err(Error::AdmissibilityLost {
                t,
                min_lambda,
                min_eta,
            }) => {
                break Termination::AdmissibilityLost {
                    t,
                    min_lambda,
                    min_eta,
                }
            }
            Err(e) => return Err(e),
        };
        let mut next = next;
        if landing && used == dt {
            next.t = target;
        }
        let landed = landing && used == dt;
        let next = Arc::new(next);
        step += 1;
        let is_steady = next.steady_residual() < params.steady_tol;
        let is_end = landed && stop_idx == stops.len() - 1;
        if step % params.snapshot_stride == 0 || landed || is_steady || is_end {
            let (prev, after) = if params.fd_triplets {
                let h = params.fd_fraction / stiffness(&next, bg, params.beta);
                probe(&next, bg, params, forcing, h)
            } else {
                (None, None)
            };
            snapshots.push(Snapshot {
                step,
                dt: used,
                state: next.clone(),
                prev,
                next: after,
            });
        }
        state = next;
    };
    Ok(Trajectory {
        params: params.clone(),
        snapshots,
        termination,
        steps: step,
        last_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Deriv, TorusGrid};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn small() -> TorusGrid {
        TorusGrid::new([16, 8, 8, 8], [1.0; 4]).unwrap()
    }

    #[test]
    fn traces_of_zero_and_sine() {
        let bg = Background::flat(small());
        let (l, e) = lambda_eta(&RealField::zeros(small()), &bg, DEFAULT_FLOOR).unwrap();
        assert_eq!((l.min(), l.max(), e.min(), e.max()), (1.0, 1.0, 1.0, 1.0));
        let eps = 0.05;
        let u = RealField::from_fn(small(), |x| eps * (2.0 * PI * x[0]).sin());
        let (l, e) = lambda_eta(&u, &bg, DEFAULT_FLOOR).unwrap();
        for i in 0..small().len() {
            let x = small().point(i);
            assert_abs_diff_eq!(l.data()[i], 1.0 - eps * PI * PI * (2.0 * PI * x[0]).sin(), epsilon = 1e-13);
            assert_abs_diff_eq!(e.data()[i], 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn degenerate_amplitude_loses_admissibility() {
        let bg = Background::flat(small());
        // amplitude 1/pi^2 gives min lambda = 0 at x1 = 1/4
        let u = RealField::from_fn(small(), |x| (2.0 * PI * x[0]).sin() / (PI * PI));
        assert!(matches!(
            lambda_eta(&u, &bg, DEFAULT_FLOOR),
            Err(Error::AdmissibilityLost { .. })
        ));
    }

    #[test]
    fn speed_examples() {
        let g = small();
        let e = RealField::constant(g, std::f64::consts::E);
        let one = RealField::constant(g, 1.0);
        let s = speed(&e, &one, 0.5, None);
        assert_abs_diff_eq!(s.min(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.max(), 0.5, epsilon = 1e-15);
        let lam = RealField::from_fn(g, |x| 1.5 + 0.2 * (2.0 * PI * x[1]).sin());
        assert_eq!(speed(&lam, &lam, 1.0, None).sup_norm(), 0.0);
    }

    #[test]
    fn dt_formula_on_flat_background() {
        let grid = TorusGrid::cube(32).unwrap();
        let bg = Background::flat(grid);
        let s = FlowState::new(RealField::zeros(grid), 0.0, &bg, 1.0, None, DEFAULT_FLOOR).unwrap();
        let rho = stiffness(&s, &bg, 1.0);
        assert_abs_diff_eq!(rho, 0.5 * (32.0 * PI).powi(2) * 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rho, 10106.4, epsilon = 0.1);
        let dt = dt_adaptive(&s, &bg, 1.0, 1.0, 1.0);
        assert_abs_diff_eq!(dt, 9.894e-5, epsilon = 1e-8);
        assert_abs_diff_eq!(dt_adaptive(&s, &bg, 1.0, 0.5, 1.0), dt / 2.0, epsilon = 1e-18);
    }

    #[test]
    fn doubled_lambda_increases_dt() {
        let grid = small();
        let bg = Background::flat(grid);
        let s = FlowState::new(RealField::zeros(grid), 0.0, &bg, 1.0, None, DEFAULT_FLOOR).unwrap();
        let mut doubled = s.clone();
        doubled.lambda = s.lambda.scale(2.0);
        assert!(dt_adaptive(&doubled, &bg, 1.0, 1.0, 1.0) > dt_adaptive(&s, &bg, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_state_is_stationary() {
        let grid = small();
        let bg = Background::flat(grid);
        let s = FlowState::new(RealField::zeros(grid), 0.0, &bg, 0.7, None, DEFAULT_FLOOR).unwrap();
        let params = FlowParams::new(0.7, 1.0);
        let n = step_rk4(&s, &bg, &params, None, 1e-3).unwrap();
        assert_eq!(n.u.sup_norm(), 0.0);
        assert_abs_diff_eq!(n.t, 1e-3);
        let traj = run(s, &bg, &params, None).unwrap();
        assert_eq!(traj.termination, Termination::Steady);
        assert_eq!(traj.snapshots.len(), 1);
    }

    #[test]
    fn zero_horizon_gives_single_snapshot() {
        let grid = small();
        let bg = Background::flat(grid);
        let u = RealField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[0]).cos());
        let s = FlowState::new(u, 0.0, &bg, 0.7, None, DEFAULT_FLOOR).unwrap();
        let traj = run(s, &bg, &FlowParams::new(0.7, 0.0), None).unwrap();
        assert_eq!(traj.termination, Termination::TEnd);
        assert_eq!(traj.snapshots.len(), 1);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = small();
        let bg = Background::flat(grid);
        let u = RealField::from_fn(grid, |x| 0.002 * (2.0 * PI * 7.0 * x[0]).cos());
        let s = FlowState::new(u, 0.0, &bg, 1.0, None, DEFAULT_FLOOR).unwrap();
        let params = FlowParams::new(1.0, 1.0);
        assert!(matches!(
            advance(&s, &bg, &params, None, 1e3),
            Err(Error::AdmissibilityLost { .. })
        ));
    }

    #[test]
    fn run_lands_on_stop_times_and_end() {
        let grid = small();
        let bg = Background::flat(grid);
        let u = RealField::from_fn(grid, |x| 0.02 * (2.0 * PI * x[0]).cos() + 0.02 * (2.0 * PI * x[2]).sin());
        let s = FlowState::new(u, 0.0, &bg, 0.5, None, DEFAULT_FLOOR).unwrap();
        let mut params = FlowParams::new(0.5, 0.05);
        params.snapshot_stride = 1000;
        params.stop_times = vec![0.0123];
        params.fd_triplets = true;
        let traj = run(s, &bg, &params, None).unwrap();
        assert_eq!(traj.termination, Termination::TEnd);
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.state.t).collect();
        assert_eq!(times, vec![0.0, 0.0123, 0.05]);
        assert!(traj.snapshots[1].triplet().is_some());
        // Speed consistency at every snapshot.
        for snap in &traj.snapshots {
            let st = &snap.state;
            let expect = speed(&st.lambda, &st.eta, 0.5, None);
            assert!(expect.sub(&st.du_dt).sup_norm() <= 1e-13);
        }
    }

    #[test]
    fn split_data_stays_split() {
        let grid = small();
        let g = RealField::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let bg = crate::geometry::kahler_product_background(&g, &RealField::constant(grid, 1.0)).unwrap();
        let u = RealField::from_fn(grid, |x| 0.03 * (2.0 * PI * x[0]).sin() + 0.02 * (2.0 * PI * (x[2] + x[3])).cos());
        let s = FlowState::new(u, 0.0, &bg, 0.6, None, DEFAULT_FLOOR).unwrap();
        let mut params = FlowParams::new(0.6, 0.05);
        params.snapshot_stride = 10;
        let traj = run(s, &bg, &params, None).unwrap();
        for snap in &traj.snapshots {
            assert!(snap.state.u.deriv(Deriv::new(1, 0, 1, 0)).sup_norm() <= 1e-10);
        }
    }
}
