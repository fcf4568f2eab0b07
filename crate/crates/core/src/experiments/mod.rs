//! Experiment recipes behind the `pluriflow` command line: plain runs with
//! monitors, Kähler convergence, exponent sweeps, the factor-flow oracle and
//! the identity suite.

pub mod config;
pub mod identities;
pub mod kahler;
pub mod oracle;
pub mod run;
pub mod sweep;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{normalize_compat, normalize_exponents, FlowParams, FlowState};
use crate::geometry::Background;
use crate::grid::RealField;

pub use config::{parse_config, parse_config_str, ExperimentConfig};

/// Bumped whenever a CSV column or a summary key changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status for an error that aborted a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::AdmissibilityLost { .. } => EXIT_NUMERICAL,
        Error::Config(_)
        | Error::InvalidField(_)
        | Error::IncompatiblePoisson { .. }
        | Error::Positivity(_)
        | Error::Unsupported(_)
        | Error::BelowThreshold { .. }
        | Error::Header(_)
        | Error::LengthMismatch { .. }
        | Error::UnsupportedExpr(_)
        | Error::Io(_) => EXIT_CONFIG,
    }
}

/// What a finished command reports back to the binary.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    /// One line per assertion, for the terminal.
    pub lines: Vec<String>,
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Background, data and forcing of the normalized problem
/// `u_t = beta log lambda - log eta - f`, with time measured in `alpha t`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub bg: Background,
    pub beta: f64,
    pub alpha: f64,
    pub u0: RealField,
    pub f_plus: RealField,
    pub f_minus: RealField,
    /// `f_plus + f_minus`, absent when both parts are configured as zero.
    pub forcing: Option<RealField>,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        Self::with_beta(cfg, cfg.flow.beta)
    }

    /// Same configuration with the exponent replaced.
    pub fn with_beta(cfg: &ExperimentConfig, beta: f64) -> Result<Self> {
        let bg = cfg.background()?;
        let u0 = cfg.initial_field()?;
        let (fp, fm) = cfg.forcing_parts()?;
        let alpha = cfg.flow.alpha;
        let np = normalize_exponents(alpha, beta, &fp)?;
        let nm = normalize_exponents(alpha, beta, &fm)?;
        let (mut f_plus, mut f_minus) = (np.f, nm.f);
        if cfg.forcing.normalize_compat6 {
            (f_plus, f_minus) = normalize_compat(&bg, &f_plus, &f_minus, np.beta)?;
        }
        let forcing = cfg.has_forcing().then(|| f_plus.add(&f_minus));
        Ok(Self {
            bg,
            beta: np.beta,
            alpha,
            u0,
            f_plus,
            f_minus,
            forcing,
        })
    }

    pub fn initial_state(&self, params: &FlowParams) -> Result<FlowState> {
        FlowState::new(
            self.u0.clone(),
            0.0,
            &self.bg,
            self.beta,
            self.forcing.as_ref(),
            params.admissibility_floor,
        )
    }

    /// Converts a normalized time back to the configured one.
    pub fn physical_time(&self, tau: f64) -> f64 {
        tau / self.alpha
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Shortest round-trip scientific notation; identical for identical bits.
pub(crate) fn sci(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_classes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::BelowThreshold { beta: 0.1, beta0: 0.15 }), 2);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        let e = Error::AdmissibilityLost {
            t: 1.0,
            min_lambda: 0.0,
            min_eta: 1.0,
        };
        assert_eq!(exit_code(&e), 3);
    }

    #[test]
    fn compat_normalization_holds() {
        let cfg = parse_config_str(
            "[grid]\ndims = [8, 8, 8, 8]\n[flow]\nbeta = 0.6\nalpha = 0.8\n[forcing]\nnormalize_compat6 = true\n\
             f_plus = { kind = \"series\", constant = 0.3, terms = [{ amplitude = 0.2, k = [1, 0, 0, 0] }] }\n\
             f_minus = { kind = \"series\", constant = -0.1, terms = [{ amplitude = 0.1, k = [0, 0, 0, 1] }] }\n",
        )
        .unwrap();
        let p = Problem::build(&cfg).unwrap();
        assert!((p.beta - 0.75).abs() < 1e-15);
        let g = p.bg.g();
        let lhs = g.zip_map(&p.f_plus, |g, f| g * (f / p.beta).exp()).integral();
        assert!((lhs / g.integral() - 1.0).abs() < 1e-12);
        let h = p.bg.h();
        let lhs = h.zip_map(&p.f_minus, |h, f| h * (-f).exp()).integral();
        assert!((lhs / h.integral() - 1.0).abs() < 1e-12);
        assert!(p.forcing.is_some());
        assert_eq!(p.physical_time(0.8), 1.0);
    }
}
