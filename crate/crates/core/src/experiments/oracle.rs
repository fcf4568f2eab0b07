//! Factor-flow oracle. For split data `u0 = a(z) + b(w)` on a Kähler product
//! the flow decouples into `a_t = beta log(1 + a_{z zbar}/g)` on the z-torus
//! and `b_t = -log(1 - b_{w wbar}/h)` on the w-torus. Both are integrated here
//! with their own two-dimensional spectral RK4 and compared with the 4D run.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::{sci, write_csv, write_json, ExperimentConfig, Problem, Verdict, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flow::{run, Termination};
use crate::grid::RealField;

pub const ORACLE_TOL: f64 = 1e-6;
/// Relative size of the non-split part of `u0` that still counts as split.
pub const SPLIT_TOL: f64 = 1e-12;
/// The oracle steps at this fraction of the 4D step size bound.
const ORACLE_CFL_FACTOR: f64 = 0.25;

/// Periodic plane with a spectral `d_z d_zbar = Laplacian / 4`.
struct Plane {
    n: [usize; 2],
    k2: Vec<f64>,
    kappa: f64,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl Plane {
    fn new(n: [usize; 2], l: [f64; 2]) -> Self {
        use std::f64::consts::PI;
        let mut planner = FftPlanner::new();
        let wave = |i: usize, n: usize, l: f64| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * k / l
        };
        let mut k2 = Vec::with_capacity(n[0] * n[1]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                k2.push(wave(i, n[0], l[0]).powi(2) + wave(j, n[1], l[1]).powi(2));
            }
        }
        Self {
            n,
            k2,
            kappa: 0.25 * ((PI * n[0] as f64 / l[0]).powi(2) + (PI * n[1] as f64 / l[1]).powi(2)),
            fwd: [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1])],
            inv: [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1])],
        }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [n0, n1] = self.n;
        for row in data.chunks_mut(n1) {
            plans[1].process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n0];
        for j in 0..n1 {
            for i in 0..n0 {
                col[i] = data[i * n1 + j];
            }
            plans[0].process(&mut col);
            for i in 0..n0 {
                data[i * n1 + j] = col[i];
            }
        }
    }

    fn ddbar(&self, u: &[f64]) -> Vec<f64> {
        let mut c: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut c, &self.fwd);
        let norm = 1.0 / (self.n[0] * self.n[1]) as f64;
        for (c, k2) in c.iter_mut().zip(&self.k2) {
            *c *= -0.25 * k2 * norm;
        }
        self.transform(&mut c, &self.inv);
        c.iter().map(|c| c.re).collect()
    }
}

/// One factor flow `u_t = scale * log(1 + sign * u_{dd} / metric)`.
struct FactorFlow {
    plane: Plane,
    metric: Vec<f64>,
    scale: f64,
    sign: f64,
}

impl FactorFlow {
    fn speed(&self, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        let d = self.plane.ddbar(u);
        let mut out = Vec::with_capacity(u.len());
        let mut coef: f64 = 0.0;
        for (dd, m) in d.iter().zip(&self.metric) {
            let tr = 1.0 + self.sign * dd / m;
            if !(tr > 0.0) {
                return Err(Error::Numerical(format!("factor flow lost admissibility: trace {tr}")));
            }
            out.push(self.scale * tr.ln());
            coef = coef.max(self.scale.abs() / (m * tr));
        }
        Ok((out, coef * self.plane.kappa))
    }

    fn rk4(&self, u: &[f64], dt: f64, k1: &[f64]) -> Result<Vec<f64>> {
        let axpy = |a: f64, k: &[f64]| -> Vec<f64> { u.iter().zip(k).map(|(u, k)| u + a * k).collect() };
        let k2 = self.speed(&axpy(0.5 * dt, k1))?.0;
        let k3 = self.speed(&axpy(0.5 * dt, &k2))?.0;
        let k4 = self.speed(&axpy(dt, &k3))?.0;
        Ok((0..u.len())
            .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }

    /// Advances `u` from `t` to `target`, landing exactly.
    fn advance(&self, u: &mut Vec<f64>, t: &mut f64, target: f64, cfl: f64, dt_max: f64) -> Result<usize> {
        let mut steps = 0;
        while *t < target {
            let (k1, rho) = self.speed(u)?;
            let mut dt = dt_max.min(ORACLE_CFL_FACTOR * cfl / rho);
            if *t + dt >= target - 1e-14 {
                dt = target - *t;
            }
            *u = self.rk4(u, dt, &k1)?;
            *t = if dt == target - *t { target } else { *t + dt };
            steps += 1;
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub beta: f64,
    pub termination: Termination,
    pub times: Vec<f64>,
    /// `sup |u_4D - (a + b)|` at each snapshot.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub oracle_steps: [usize; 2],
    pub passed: bool,
}

impl OracleReport {
    pub fn verdict(&self) -> Verdict {
        Verdict {
            passed: self.passed,
            lines: vec![format!(
                "{} matched times, max sup error {:.3e} (limit {ORACLE_TOL:e})",
                self.times.len(),
                self.max_error
            )],
        }
    }
}

/// Factors of split data: `a = u0(x1, x2, 0, 0)` and
/// `b = u0(0, 0, x3, x4) - u0(0)`.
pub fn split_factors(u0: &RealField) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = u0.grid();
    let [n1, n2, n3, n4] = grid.dims();
    let d = u0.data();
    let a: Vec<f64> = (0..n1 * n2).map(|i| d[grid.index([i / n2, i % n2, 0, 0])]).collect();
    let b: Vec<f64> = (0..n3 * n4).map(|i| d[grid.index([0, 0, i / n4, i % n4])] - d[0]).collect();
    let mut gap: f64 = 0.0;
    for (i, v) in d.iter().enumerate() {
        let [i1, i2, i3, i4] = grid.multi_index(i);
        gap = gap.max((v - a[i1 * n2 + i2] - b[i3 * n4 + i4]).abs());
    }
    if gap > SPLIT_TOL * (1.0 + u0.sup_norm()) {
        return Err(Error::Config(format!(
            "oracle-2d needs split initial data u0 = a(z) + b(w); the non-split part is {gap:e}"
        )));
    }
    Ok((a, b))
}

pub fn oracle_2d(cfg: &ExperimentConfig, out: &Path) -> Result<OracleReport> {
    let p = Problem::build(cfg)?;
    if !p.bg.is_kahler() {
        return Err(Error::Config("oracle-2d needs background.kind = \"kahler_product\"".into()));
    }
    if p.forcing.is_some() {
        return Err(Error::Config("oracle-2d runs the unforced flow; remove [forcing]".into()));
    }
    let (mut a, mut b) = split_factors(&p.u0)?;
    let grid = *p.bg.grid();
    let [n1, n2, n3, n4] = grid.dims();
    let l = grid.periods();
    let g = p.bg.g().data();
    let h = p.bg.h().data();
    let plus = FactorFlow {
        plane: Plane::new([n1, n2], [l[0], l[1]]),
        metric: (0..n1 * n2).map(|i| g[grid.index([i / n2, i % n2, 0, 0])]).collect(),
        scale: p.beta,
        sign: 1.0,
    };
    let minus = FactorFlow {
        plane: Plane::new([n3, n4], [l[2], l[3]]),
        metric: (0..n3 * n4).map(|i| h[grid.index([0, 0, i / n4, i % n4])]).collect(),
        scale: -1.0,
        sign: -1.0,
    };

    let mut params = cfg.flow_params();
    params.fd_triplets = false;
    let traj = run(p.initial_state(&params)?, &p.bg, &params, None)?;
    if let Termination::AdmissibilityLost {
        t,
        min_lambda,
        min_eta,
    } = traj.termination
    {
        return Err(Error::AdmissibilityLost {
            t: p.physical_time(t),
            min_lambda,
            min_eta,
        });
    }

    let (mut ta, mut tb) = (0.0, 0.0);
    let mut steps = [0, 0];
    let mut times = Vec::new();
    let mut errors = Vec::new();
    for s in &traj.snapshots {
        let tau = s.state.t;
        steps[0] += plus.advance(&mut a, &mut ta, tau, params.cfl, params.dt_max)?;
        steps[1] += minus.advance(&mut b, &mut tb, tau, params.cfl, params.dt_max)?;
        let mut err: f64 = 0.0;
        for (i, v) in s.state.u.data().iter().enumerate() {
            let [i1, i2, i3, i4] = grid.multi_index(i);
            err = err.max((v - a[i1 * n2 + i2] - b[i3 * n4 + i4]).abs());
        }
        times.push(p.physical_time(tau));
        errors.push(err);
    }
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    let report = OracleReport {
        schema_version: SCHEMA_VERSION,
        command: "oracle-2d",
        beta: p.beta,
        termination: traj.termination.clone(),
        max_error,
        oracle_steps: steps,
        passed: max_error <= ORACLE_TOL,
        times,
        errors,
    };
    fs::create_dir_all(out)?;
    let rows: Vec<Vec<String>> = report
        .times
        .iter()
        .zip(&report.errors)
        .map(|(t, e)| vec![sci(*t), sci(*e)])
        .collect();
    write_csv(&out.join("oracle_2d.csv"), &["t".to_string(), "sup_error".to_string()], &rows)?;
    write_json(&out.join("oracle_2d.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    #[test]
    fn plane_operator_on_modes() {
        let plane = Plane::new([16, 8], [1.0, 2.0]);
        let u: Vec<f64> = (0..128)
            .map(|i| {
                let (x, y) = ((i / 8) as f64 / 16.0, (i % 8) as f64 * 2.0 / 8.0);
                (2.0 * PI * 3.0 * x).sin() * (2.0 * PI * y / 2.0).cos()
            })
            .collect();
        let d = plane.ddbar(&u);
        let factor = -0.25 * ((6.0 * PI).powi(2) + PI * PI);
        for (d, u) in d.iter().zip(&u) {
            assert!((d - factor * u).abs() < 1e-11);
        }
    }

    #[test]
    fn split_detection() {
        let grid = TorusGrid::new([8, 8, 8, 8], [1.0; 4]).unwrap();
        let split = RealField::from_fn(grid, |x| (2.0 * PI * x[0]).sin() + 0.3 * (2.0 * PI * x[3]).cos());
        let (a, b) = split_factors(&split).unwrap();
        assert!((a[8] - (2.0 * PI / 8.0).sin() - 0.3).abs() < 1e-15);
        assert_eq!(b[0], 0.0);
        let mixed = RealField::from_fn(grid, |x| 0.01 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).sin());
        assert!(matches!(split_factors(&mixed), Err(Error::Config(_))));
    }
}
