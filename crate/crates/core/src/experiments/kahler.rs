//! Exponential convergence to the steady metric on Kähler products.
//!
//! The forced flow for `u` is run as the unforced flow for `v = u - u_inf` on
//! the steady background `g_mu = g + (u_inf)_{z zbar}`,
//! `h_mu = h - (u_inf)_{w wbar}`, where `u_inf` solves the two factor
//! Poisson problems. Then `omega_u - mu` has components `v_{z zbar}`,
//! `-v_{w wbar}` and `v_{z wbar}`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{sci, write_csv, write_json, ExperimentConfig, Problem, Verdict, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flow::{gauge_out_f, run, FlowState, Termination};
use crate::geometry::{Background, BackgroundKind};
use crate::grid::{Deriv, RealField};

pub const FINAL_ERROR_TOL: f64 = 1e-6;
pub const MIN_R_SQUARED: f64 = 0.99;
/// Errors below this are roundoff and are left out of the rate fit.
pub const FIT_FLOOR: f64 = 1e-11;
/// Poisson-built versus closed-form steady metric.
pub const STEADY_METRIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePoint {
    pub t: f64,
    /// `||omega_u - mu||_inf`.
    pub error: f64,
    /// `sup |u_{z w}|`, zero for split data.
    pub splitting: f64,
    pub steady_residual: f64,
}

/// Least-squares line `ln error = intercept - rate t`.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub t_from: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KahlerReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub beta: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    /// `max |g_mu - g e^{(f+ + b+)/beta}|` and its `h` analogue, relative.
    pub steady_metric_error: f64,
    pub termination: Termination,
    pub series: Vec<ConvergencePoint>,
    pub fit: Option<RateFit>,
    pub final_error: f64,
    pub final_splitting: f64,
    pub assertions: Vec<(String, bool)>,
    pub passed: bool,
}

impl KahlerReport {
    pub fn verdict(&self) -> Verdict {
        let mut lines = vec![format!(
            "final error {:.3e}, splitting {:.3e}, termination {}",
            self.final_error,
            self.final_splitting,
            self.termination.name()
        )];
        if let Some(f) = &self.fit {
            lines.push(format!("rate {:.6} (R^2 = {:.6}, {} points from t = {})", f.rate, f.r_squared, f.points, f.t_from));
        }
        for (name, ok) in &self.assertions {
            lines.push(format!("{} {name}", if *ok { "pass" } else { "FAIL" }));
        }
        Verdict {
            passed: self.passed,
            lines,
        }
    }
}

pub fn fit_rate(t: &[f64], err: &[f64]) -> Option<RateFit> {
    let t_from = t.last()? / 2.0;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(err)
        .filter(|(&t, &e)| t >= t_from && e > FIT_FLOOR)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(RateFit {
        rate: -slope,
        intercept: my - slope * mt,
        r_squared,
        points: pts.len(),
        t_from,
    })
}

fn metric_error(state: &FlowState) -> (f64, f64) {
    let v = &state.u;
    let zz = v.deriv(Deriv::ZZBAR).sup_norm();
    let ww = v.deriv(Deriv::WWBAR).sup_norm();
    let zw = v.deriv(Deriv::new(1, 0, 0, 1)).sup_norm();
    let split = v.deriv(Deriv::new(1, 0, 1, 0)).sup_norm();
    (zz.max(ww).max(zw), split)
}

fn relative_gap(a: &RealField, b: &RealField) -> f64 {
    a.sub(b).sup_norm() / b.sup_norm()
}

pub fn kahler_converge(cfg: &ExperimentConfig, out: &Path) -> Result<KahlerReport> {
    let p = Problem::build(cfg)?;
    if !p.bg.is_kahler() {
        return Err(Error::Config("kahler-converge needs background.kind = \"kahler_product\"".into()));
    }
    if !cfg.forcing.normalize_compat6 {
        return Err(Error::Config("kahler-converge needs forcing.normalize_compat6 = true".into()));
    }
    let gauge = gauge_out_f(&p.bg, &p.f_plus, &p.f_minus, p.beta)?;
    let g_mu = p.bg.g().add(&gauge.u_inf.deriv(Deriv::ZZBAR).re());
    let h_mu = p.bg.h().sub(&gauge.u_inf.deriv(Deriv::WWBAR).re());
    let g_exact = p
        .bg
        .g()
        .zip_map(&p.f_plus, |g, f| g * ((f + gauge.b_plus) / p.beta).exp());
    let h_exact = p.bg.h().zip_map(&p.f_minus, |h, f| h * (-(f + gauge.b_minus)).exp());
    let steady_metric_error = relative_gap(&g_mu, &g_exact).max(relative_gap(&h_mu, &h_exact));
    let mu = Background::new(g_mu, h_mu, BackgroundKind::KahlerProduct)?;

    let params = cfg.flow_params();
    let v0 = p.u0.sub(&gauge.u_inf);
    let initial = FlowState::new(v0, 0.0, &mu, p.beta, None, params.admissibility_floor)?;
    let traj = run(initial, &mu, &params, None)?;
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

    let series: Vec<ConvergencePoint> = traj
        .snapshots
        .iter()
        .map(|s| {
            let (error, splitting) = metric_error(&s.state);
            ConvergencePoint {
                t: p.physical_time(s.state.t),
                error,
                splitting,
                steady_residual: p.alpha * s.state.steady_residual(),
            }
        })
        .collect();
    let t: Vec<f64> = series.iter().map(|c| c.t).collect();
    let e: Vec<f64> = series.iter().map(|c| c.error).collect();
    let fit = fit_rate(&t, &e);
    let last = series.last().expect("initial snapshot");
    let assertions = vec![
        (format!("final error {:.3e} <= {FINAL_ERROR_TOL:e}", last.error), last.error <= FINAL_ERROR_TOL),
        (
            format!("tail fit R^2 >= {MIN_R_SQUARED}"),
            fit.as_ref().is_some_and(|f| f.r_squared >= MIN_R_SQUARED),
        ),
        ("measured rate > 0".to_string(), fit.as_ref().is_some_and(|f| f.rate > 0.0)),
        (
            format!("steady metric matches its closed form to {STEADY_METRIC_TOL:e}"),
            steady_metric_error <= STEADY_METRIC_TOL,
        ),
    ];
    let passed = assertions.iter().all(|a| a.1);
    let report = KahlerReport {
        schema_version: SCHEMA_VERSION,
        command: "kahler-converge",
        beta: p.beta,
        b_plus: gauge.b_plus,
        b_minus: gauge.b_minus,
        steady_metric_error,
        termination: traj.termination.clone(),
        final_error: last.error,
        final_splitting: last.splitting,
        fit,
        assertions,
        passed,
        series,
    };
    fs::create_dir_all(out)?;
    let header: Vec<String> = ["t", "error", "splitting", "steady_residual"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .series
        .iter()
        .map(|c| vec![sci(c.t), sci(c.error), sci(c.splitting), sci(c.steady_residual)])
        .collect();
    write_csv(&out.join("kahler_converge.csv"), &header, &rows)?;
    write_json(&out.join("kahler_converge.json"), &report)?;
    Ok(report)
}
