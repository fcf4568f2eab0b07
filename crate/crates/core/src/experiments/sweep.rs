//! Runs at several exponents against the `beta = 1` reference, compared at
//! matched times.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::check_sweep_beta;
use super::{sci, write_csv, write_json, ExperimentConfig, Problem, Verdict, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flow::{run, Termination, Trajectory};
use crate::geometry::curvature;
use crate::grid::RealField;
use crate::monitors::c0_series;

/// Allowed growth of the distance from one exponent to the next.
pub const MONOTONE_SLACK: f64 = 0.05;
/// Allowed growth of `C0` over its initial value when it cannot increase.
pub const C0_SLACK: f64 = 1e-6;
/// Sweep runs never stop early, so every run reaches every matched time.
const NO_STEADY_STOP: f64 = 1e-300;
/// `C0` is sampled this many times per matched interval.
const C0_SAMPLES_PER_INTERVAL: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub beta: f64,
    pub steps: usize,
    pub termination: Termination,
    pub c0_initial: f64,
    pub c0_max: f64,
    /// `||u_beta - u_1||_inf` at each matched time.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub command: &'static str,
    /// The checks hold on `[0, horizon]` only.
    pub horizon: f64,
    pub matched_times: Vec<f64>,
    pub cor8_holds: bool,
    pub c0_limit: Option<f64>,
    pub reference: SweepRun,
    pub runs: Vec<SweepRun>,
    pub assertions: Vec<(String, bool)>,
    pub passed: bool,
}

impl SweepReport {
    pub fn verdict(&self) -> Verdict {
        let mut lines = vec![format!("horizon t = {} ({} matched times)", self.horizon, self.matched_times.len())];
        for r in &self.runs {
            lines.push(format!(
                "beta {:<8} distance at horizon {:.6e}, max C0 {:.9}",
                r.beta,
                r.distances.last().copied().unwrap_or(0.0),
                r.c0_max
            ));
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

fn state_at(traj: &Trajectory, t: f64) -> Result<&RealField> {
    traj.snapshots
        .iter()
        .find(|s| (s.state.t - t).abs() <= 1e-12 * t.max(1.0))
        .map(|s| &s.state.u)
        .ok_or_else(|| Error::Numerical(format!("no snapshot at matched time {t}")))
}

fn integrate(cfg: &ExperimentConfig, beta: f64, stops: &[f64]) -> Result<(Trajectory, Problem)> {
    let p = Problem::with_beta(cfg, beta)?;
    let mut params = cfg.flow_params();
    params.beta = p.beta;
    params.steady_tol = NO_STEADY_STOP;
    params.stop_times = stops.to_vec();
    params.fd_triplets = false;
    params.snapshot_stride = usize::MAX;
    let traj = run(p.initial_state(&params)?, &p.bg, &params, p.forcing.as_ref())?;
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
    Ok((traj, p))
}

/// `betas` replaces the configured list when given.
pub fn beta_sweep(cfg: &ExperimentConfig, betas: Option<&[f64]>, out: &Path) -> Result<SweepReport> {
    let mut betas: Vec<f64> = betas.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.sweep.betas.clone());
    for &b in &betas {
        check_sweep_beta(b)?;
        if b > cfg.flow.alpha {
            return Err(Error::Config(format!("sweep beta {b} exceeds flow.alpha = {}", cfg.flow.alpha)));
        }
    }
    if betas.is_empty() {
        return Err(Error::Config("sweep needs at least one beta".into()));
    }
    betas.sort_by(f64::total_cmp);
    let alpha = cfg.flow.alpha;
    let m = cfg.sweep.matched_times;
    let horizon = cfg.flow.t_end;
    let times: Vec<f64> = (1..=m).map(|k| horizon * k as f64 / m as f64).collect();
    let taus: Vec<f64> = times.iter().map(|t| t * alpha).collect();
    let n_samples = C0_SAMPLES_PER_INTERVAL * m;
    let samples: Vec<f64> = (1..=n_samples)
        .map(|k| alpha * horizon * k as f64 / n_samples as f64)
        .collect();

    let (ref_traj, ref_p) = integrate(cfg, alpha, &samples)?;
    let cor8_holds = curvature(&ref_p.bg).cor8_holds;
    let summarize = |beta: f64, traj: &Trajectory| -> Result<SweepRun> {
        let c0 = c0_series(traj);
        let distances = taus
            .iter()
            .map(|&tau| Ok(state_at(traj, tau)?.sub(state_at(&ref_traj, tau)?).sup_norm()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(SweepRun {
            beta,
            steps: traj.steps,
            termination: traj.termination.clone(),
            c0_initial: c0.values[0],
            c0_max: c0.running_max.last().copied().unwrap_or(f64::NAN),
            distances,
        })
    };
    let reference = summarize(alpha, &ref_traj)?;
    let mut runs = Vec::new();
    for &b in &betas {
        if b == alpha {
            runs.push(reference.clone());
            continue;
        }
        let (traj, _) = integrate(cfg, b, &samples)?;
        runs.push(summarize(b, &traj)?);
    }

    let mut assertions = Vec::new();
    for w in runs.windows(2) {
        let (d0, d1) = (w[0].distances[m - 1], w[1].distances[m - 1]);
        assertions.push((
            format!("distance at t = {horizon}: beta {} ({d1:.6e}) <= 1.05 x beta {} ({d0:.6e})", w[1].beta, w[0].beta),
            d1 <= (1.0 + MONOTONE_SLACK) * d0,
        ));
    }
    for r in runs.iter().chain(std::iter::once(&reference)) {
        if cor8_holds {
            assertions.push((
                format!("beta {}: max C0 {:.12} <= C0(0) + {C0_SLACK:e}", r.beta, r.c0_max),
                r.c0_max <= r.c0_initial + C0_SLACK,
            ));
        } else if let Some(limit) = cfg.sweep.c0_limit {
            assertions.push((format!("beta {}: max C0 {:.12} <= {limit}", r.beta, r.c0_max), r.c0_max <= limit));
        } else {
            assertions.push((format!("beta {}: max C0 {:.12} finite", r.beta, r.c0_max), r.c0_max.is_finite()));
        }
    }
    let passed = assertions.iter().all(|a| a.1);
    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        command: "beta-sweep",
        horizon,
        matched_times: times,
        cor8_holds,
        c0_limit: cfg.sweep.c0_limit,
        reference,
        runs,
        assertions,
        passed,
    };
    fs::create_dir_all(out)?;
    let mut header = vec!["t".to_string()];
    header.extend(report.runs.iter().map(|r| format!("distance_beta_{}", r.beta)));
    let rows: Vec<Vec<String>> = report
        .matched_times
        .iter()
        .enumerate()
        .map(|(k, &t)| std::iter::once(sci(t)).chain(report.runs.iter().map(|r| sci(r.distances[k]))).collect())
        .collect();
    write_csv(&out.join("beta_sweep.csv"), &header, &rows)?;
    write_json(&out.join("beta_sweep.json"), &report)?;
    Ok(report)
}
