//! Plain flow run: time series, monitors and field dumps.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{sci, write_csv, write_json, ExperimentConfig, Problem, Verdict, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::flow::{run, FlowState, Termination, Trajectory};
use crate::geometry::ConstantEntry;
use crate::grid::io;
use crate::monitors::{corrupt, evaluate, mixed_norm, Corruption, MonitorContext, MonitorSuite};

/// Leading columns of `timeseries.csv`; each enabled check then adds
/// `<check>_pass` and `<check>_margin`.
pub const STATE_COLUMNS: [&str; 12] = [
    "t",
    "dt",
    "max_du_dt",
    "min_du_dt",
    "osc_u",
    "min_lambda",
    "max_lambda",
    "min_eta",
    "max_eta",
    "c0",
    "sup_mixed_norm",
    "steady_residual",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replay the trajectory with the defect that this check must detect.
    pub corrupt: Option<Corruption>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateStats {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub mean_u: f64,
    pub osc_u: f64,
    pub max_du_dt: f64,
    pub min_du_dt: f64,
    pub min_lambda: f64,
    pub max_lambda: f64,
    pub min_eta: f64,
    pub max_eta: f64,
    pub c0: f64,
    pub sup_mixed_norm: f64,
    pub steady_residual: f64,
}

impl StateStats {
    /// Statistics in configured units: `du/dt` is scaled by `alpha`.
    pub fn of(state: &FlowState, p: &Problem) -> Self {
        let c0 = state.lambda.zip_map(&state.eta, |l, e| 1.0 / l + 1.0 / e).max();
        Self {
            t: p.physical_time(state.t),
            min_u: state.u.min(),
            max_u: state.u.max(),
            mean_u: state.u.mean(),
            osc_u: state.u.max() - state.u.min(),
            max_du_dt: p.alpha * state.du_dt.max(),
            min_du_dt: p.alpha * state.du_dt.min(),
            min_lambda: state.lambda.min(),
            max_lambda: state.lambda.max(),
            min_eta: state.eta.min(),
            max_eta: state.eta.max(),
            c0,
            sup_mixed_norm: mixed_norm(state, &p.bg, p.beta).sup_norm(),
            steady_residual: p.alpha * state.steady_residual(),
        }
    }

    fn row(&self, dt: f64) -> Vec<String> {
        [
            self.t,
            dt,
            self.max_du_dt,
            self.min_du_dt,
            self.osc_u,
            self.min_lambda,
            self.max_lambda,
            self.min_eta,
            self.max_eta,
            self.c0,
            self.sup_mixed_norm,
            self.steady_residual,
        ]
        .into_iter()
        .map(sci)
        .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub passed: bool,
    pub skipped: Option<String>,
    pub records: usize,
    pub worst_margin: Option<f64>,
    pub first_failure: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub columns: Vec<String>,
    pub beta: f64,
    pub alpha: f64,
    pub normalized_beta: f64,
    pub corruption: Option<&'static str>,
    pub termination: Termination,
    pub steps: usize,
    pub snapshots: usize,
    pub initial: StateStats,
    #[serde(rename = "final")]
    pub last: StateStats,
    pub checks: Vec<CheckSummary>,
    pub constants: Vec<ConstantEntry>,
    pub passed: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub monitors: MonitorSuite,
}

impl RunOutcome {
    pub fn verdict(&self) -> Verdict {
        let mut lines = vec![format!(
            "termination {} after {} steps at t = {}",
            self.summary.termination.name(),
            self.summary.steps,
            self.summary.last.t
        )];
        for c in &self.summary.checks {
            let state = match (&c.skipped, c.passed) {
                (Some(why), _) => format!("skipped ({why})"),
                (None, true) => "pass".into(),
                (None, false) => format!("FAIL first at t = {}", c.first_failure.unwrap_or(f64::NAN)),
            };
            lines.push(format!("{:<20} {state}", c.name));
        }
        Verdict {
            passed: self.summary.passed,
            lines,
        }
    }
}

/// Integrates the configured flow, evaluates the monitors and writes
/// `timeseries.csv`, `summary.json` and the field dumps into `out`.
///
/// Artifacts are written before a lost admissibility is reported as an
/// error.
pub fn run_flow(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let p = Problem::build(cfg)?;
    let mut params = cfg.flow_params();
    let mut mon = cfg.monitor_config();
    if let Some(c) = opts.corrupt {
        params.fd_triplets = true;
        if !mon.enabled.iter().any(|e| e == c.check()) {
            mon.enabled.push(c.check().to_string());
        }
    }
    let initial = p.initial_state(&params)?;
    let mut traj = run(initial, &p.bg, &params, p.forcing.as_ref())?;
    if let Some(c) = opts.corrupt {
        traj = corrupt(&traj, c)?;
    }
    let ctx = MonitorContext {
        bg: &p.bg,
        beta: p.beta,
        forcing: p.forcing.as_ref(),
    };
    let suite = evaluate(&traj, ctx, &mon)?;

    fs::create_dir_all(out)?;
    let (columns, rows) = timeseries(&traj, &suite, &mon.enabled, &p);
    write_csv(&out.join("timeseries.csv"), &columns, &rows)?;
    if let Some(stride) = cfg.output.field_dump_stride {
        dump_fields(&traj, stride, &out.join("fields"))?;
    }

    let checks: Vec<CheckSummary> = suite
        .checks
        .iter()
        .map(|c| CheckSummary {
            name: c.name,
            passed: c.passed(),
            skipped: c.skipped.clone(),
            records: c.records.len(),
            worst_margin: c.worst_margin(),
            first_failure: c.first_failure().map(|t| p.physical_time(t)),
        })
        .collect();
    let passed = suite.passed() && !traj.termination.is_failure();
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        command: "run",
        columns,
        beta: cfg.flow.beta,
        alpha: cfg.flow.alpha,
        normalized_beta: p.beta,
        corruption: opts.corrupt.map(Corruption::check),
        termination: traj.termination.clone(),
        steps: traj.steps,
        snapshots: traj.snapshots.len(),
        initial: StateStats::of(traj.initial(), &p),
        last: StateStats::of(&traj.last_state, &p),
        checks,
        constants: suite.constants.entries(),
        passed,
    };
    write_json(&out.join("summary.json"), &summary)?;
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
    Ok(RunOutcome {
        summary,
        trajectory: traj,
        monitors: suite,
    })
}

fn timeseries(traj: &Trajectory, suite: &MonitorSuite, enabled: &[String], p: &Problem) -> (Vec<String>, Vec<Vec<String>>) {
    let checks: Vec<_> = enabled.iter().filter_map(|n| suite.check(n)).collect();
    let mut header: Vec<String> = STATE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for c in &checks {
        header.push(format!("{}_pass", c.name));
        header.push(format!("{}_margin", c.name));
    }
    let rows = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = StateStats::of(&s.state, p).row(p.physical_time(s.dt));
            for c in &checks {
                match c.record_at(i) {
                    Some(r) => {
                        row.push(u8::from(r.pass).to_string());
                        row.push(sci(r.slack()));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    (header, rows)
}

fn dump_fields(traj: &Trajectory, stride: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let last = traj.snapshots.len() - 1;
    for (i, s) in traj.snapshots.iter().enumerate() {
        if i % stride == 0 || i == last {
            io::save(&dir.join(format!("u_{i:05}.field")), &s.state.u)?;
        }
    }
    Ok(())
}

