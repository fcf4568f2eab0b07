//! The identity suite as a command.

use std::fs;
use std::path::Path;

use super::{write_json, ExperimentConfig, Verdict};
use crate::error::Result;
use crate::identities::{run_suite, IdentityReport, SuiteOptions};

pub fn check_identities(cfg: &ExperimentConfig, opts: SuiteOptions, out: &Path) -> Result<IdentityReport> {
    let ids = &cfg.identities;
    let report = run_suite(&ids.fixture, &ids.betas, (ids.grids[0], ids.grids[1]), opts)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("identities.json"), &report)?;
    Ok(report)
}

pub fn verdict(report: &IdentityReport) -> Verdict {
    let fine = report.results.iter().map(|r| r.grid[0]).max().unwrap_or(0);
    let checked = report.results.iter().filter(|r| r.grid[0] == fine).count();
    let mut lines = vec![format!(
        "{checked} results on the {fine}^4 grid, {} convergence records",
        report.convergence.len()
    )];
    lines.extend(report.failures().into_iter().map(|f| format!("FAIL {f}")));
    Verdict {
        passed: report.pass,
        lines,
    }
}
