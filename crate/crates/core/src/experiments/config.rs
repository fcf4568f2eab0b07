//! Sectioned TOML configuration for the experiment drivers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, DEFAULT_FLOOR};
use crate::geometry::{beta0, kahler_product_background, pluriclosed_background, Background, BackgroundKind, PluriMode, TrigSeries, TrigTerm};
use crate::grid::{io, RealField, TorusGrid};
use crate::identities::{band_limited_field, Band, IdentityFixture};
use crate::monitors::{all_checks, MonitorConfig, LEMMA24_FD_CONSTANT};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub identities: IdentitySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dims: [usize; 4],
    #[serde(default = "unit_periods")]
    pub periods: [f64; 4],
}

fn unit_periods() -> [f64; 4] {
    [1.0; 4]
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dims: [16; 4],
            periods: unit_periods(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    #[default]
    Flat,
    /// `g(z)` and `h(w)` given as trigonometric profiles.
    KahlerProduct { g: TrigSeries, h: TrigSeries },
    Pluriclosed {
        #[serde(default = "one")]
        c_g: f64,
        #[serde(default = "one")]
        c_h: f64,
        modes: Vec<PluriMode>,
    },
    Files {
        g_file: PathBuf,
        h_file: PathBuf,
        #[serde(default)]
        kahler: bool,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_floor")]
    pub admissibility_floor: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub filter_order: Option<u32>,
}

fn default_cfl() -> f64 {
    0.5
}
fn default_dt_max() -> f64 {
    1e-2
}
fn default_steady_tol() -> f64 {
    1e-9
}
fn default_stride() -> usize {
    10
}
fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            alpha: 1.0,
            cfl: default_cfl(),
            dt_max: default_dt_max(),
            t_end: 1.0,
            steady_tol: default_steady_tol(),
            snapshot_stride: default_stride(),
            admissibility_floor: default_floor(),
            max_steps: None,
            filter_order: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zero,
    /// Band-limited random data; `seed` may be overridden from the command line.
    Random { seed: u64, amplitude: f64, band: Band },
    Series {
        #[serde(default)]
        constant: f64,
        terms: Vec<TrigTerm>,
    },
    /// Sum of two dumped fields, one per factor.
    Split { a_file: PathBuf, b_file: PathBuf },
    File { path: PathBuf },
}

/// A scalar field on the grid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    Series {
        #[serde(default)]
        constant: f64,
        terms: Vec<TrigTerm>,
    },
    /// `scale * log(series)`.
    LogSeries {
        scale: f64,
        #[serde(default)]
        constant: f64,
        terms: Vec<TrigTerm>,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default)]
    pub f_plus: FieldSpec,
    #[serde(default)]
    pub f_minus: FieldSpec,
    /// Shift both parts by constants so that the volume compatibility holds.
    #[serde(default)]
    pub normalize_compat6: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default = "all_checks")]
    pub enabled: Vec<String>,
    #[serde(default = "one")]
    pub safety: f64,
    #[serde(default = "default_fd_constant")]
    pub fd_constant: f64,
    /// Probe step for time differences, as a fraction of `1/rho`.
    #[serde(default = "default_fd_fraction")]
    pub fd_fraction: f64,
}

fn default_fd_constant() -> f64 {
    LEMMA24_FD_CONSTANT
}
fn default_fd_fraction() -> f64 {
    5e-2
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            enabled: all_checks(),
            safety: 1.0,
            fd_constant: default_fd_constant(),
            fd_fraction: default_fd_fraction(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub directory: PathBuf,
    /// Dump `u` every this many snapshots; no dumps when absent.
    #[serde(default)]
    pub field_dump_stride: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_out(),
            field_dump_stride: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sweep_betas")]
    pub betas: Vec<f64>,
    /// Number of equally spaced comparison times in `(0, t_end]`.
    #[serde(default = "default_matched")]
    pub matched_times: usize,
    /// Bound on `C0` used when the curvature does not give monotonicity.
    #[serde(default)]
    pub c0_limit: Option<f64>,
}

fn default_sweep_betas() -> Vec<f64> {
    vec![0.9, 0.95, 0.99]
}
fn default_matched() -> usize {
    10
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            betas: default_sweep_betas(),
            matched_times: default_matched(),
            c0_limit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    #[serde(default = "default_identity_betas")]
    pub betas: Vec<f64>,
    /// Coarse and fine cube sizes.
    #[serde(default = "default_identity_grids")]
    pub grids: [usize; 2],
    #[serde(default)]
    pub fixture: IdentityFixture,
}

fn default_identity_betas() -> Vec<f64> {
    vec![0.3, 0.7, 1.0]
}
fn default_identity_grids() -> [usize; 2] {
    [16, 32]
}

impl Default for IdentitySection {
    fn default() -> Self {
        Self {
            betas: default_identity_betas(),
            grids: default_identity_grids(),
            fixture: IdentityFixture::default(),
        }
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        e => e,
    })?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.to_string();
        match suggestion(&msg) {
            Some(s) => Error::Config(format!("{}\n{s}", msg.trim_end())),
            None => Error::Config(msg.trim_end().to_string()),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// "did you mean" hint for serde's unknown field and variant messages.
fn suggestion(msg: &str) -> Option<String> {
    let rest = msg
        .split("unknown field `")
        .nth(1)
        .or_else(|| msg.split("unknown variant `").nth(1))?;
    let (bad, rest) = rest.split_once('`')?;
    let expected: Vec<&str> = rest.split('`').skip(1).step_by(2).collect();
    closest(bad, &expected).map(|s| format!("did you mean `{s}`?"))
}

fn closest<'a>(bad: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(bad, c), *c))
        .filter(|(score, _)| *score > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        TorusGrid::new(self.grid.dims, self.grid.periods).map_err(|e| Error::Config(format!("[grid] {e}")))?;
        let f = &self.flow;
        for (key, v) in [("flow.beta", f.beta), ("flow.alpha", f.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} = {v} must be positive"));
            }
        }
        if f.beta > f.alpha {
            return bad(format!("flow.beta = {} exceeds flow.alpha = {}", f.beta, f.alpha));
        }
        if !(f.cfl > 0.0 && f.cfl <= 1.0) {
            return bad(format!("flow.cfl = {} outside (0, 1]", f.cfl));
        }
        for (key, v) in [
            ("flow.dt_max", f.dt_max),
            ("flow.t_end", f.t_end),
            ("flow.steady_tol", f.steady_tol),
            ("flow.admissibility_floor", f.admissibility_floor),
            ("monitors.safety", self.monitors.safety),
            ("monitors.fd_constant", self.monitors.fd_constant),
            ("monitors.fd_fraction", self.monitors.fd_fraction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} = {v} must be positive"));
            }
        }
        for (key, v) in [
            ("flow.snapshot_stride", Some(f.snapshot_stride)),
            ("output.field_dump_stride", self.output.field_dump_stride),
            ("sweep.matched_times", Some(self.sweep.matched_times)),
        ] {
            if v == Some(0) {
                return bad(format!("{key} must be at least 1"));
            }
        }
        let known = all_checks();
        let known_refs: Vec<&str> = known.iter().map(String::as_str).collect();
        for name in &self.monitors.enabled {
            if !known.contains(name) {
                let hint = closest(name, &known_refs).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
                return bad(format!("monitors.enabled: unknown check `{name}`{hint}"));
            }
        }
        if let InitialSpec::Random { amplitude, band, .. } = &self.initial {
            Band::new(band.min, band.max).map_err(|e| Error::Config(format!("initial.band: {e}")))?;
            if !(amplitude.is_finite() && *amplitude >= 0.0) {
                return bad(format!("initial.amplitude = {amplitude} must be nonnegative"));
            }
        }
        for &b in &self.sweep.betas {
            check_sweep_beta(b)?;
        }
        let ids = &self.identities;
        if ids.grids[0] >= ids.grids[1] {
            return bad(format!("identities.grids must increase, got {:?}", ids.grids));
        }
        for &b in &ids.betas {
            if !(b > 0.0 && b <= 1.0) {
                return bad(format!("identities.betas: {b} outside (0, 1]"));
            }
        }
        Band::new(ids.fixture.band.min, ids.fixture.band.max)
            .map_err(|e| Error::Config(format!("identities.fixture.band: {e}")))?;
        Ok(())
    }

    pub fn torus(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dims, self.grid.periods)
    }

    pub fn background(&self) -> Result<Background> {
        let grid = self.torus()?;
        match &self.background {
            BackgroundSpec::Flat => Ok(Background::flat(grid)),
            BackgroundSpec::KahlerProduct { g, h } => {
                if !g.independent_of([2, 3]) || !h.independent_of([0, 1]) {
                    return Err(Error::Config(
                        "background.g may only depend on x1, x2 and background.h on x3, x4".into(),
                    ));
                }
                kahler_product_background(&g.sample(grid), &h.sample(grid))
            }
            BackgroundSpec::Pluriclosed { c_g, c_h, modes } => pluriclosed_background(grid, *c_g, *c_h, modes),
            BackgroundSpec::Files { g_file, h_file, kahler } => {
                let g = load_on(g_file, grid)?;
                let h = load_on(h_file, grid)?;
                let kind = if *kahler {
                    BackgroundKind::KahlerProduct
                } else {
                    BackgroundKind::PluriclosedGeneral
                };
                Background::new(g, h, kind)
            }
        }
    }

    pub fn initial_field(&self) -> Result<RealField> {
        let grid = self.torus()?;
        match &self.initial {
            InitialSpec::Zero => Ok(RealField::zeros(grid)),
            InitialSpec::Random { seed, amplitude, band } => Ok(band_limited_field(grid, *seed, *amplitude, *band)),
            InitialSpec::Series { constant, terms } => Ok(series(*constant, terms).sample(grid)),
            InitialSpec::Split { a_file, b_file } => Ok(load_on(a_file, grid)?.add(&load_on(b_file, grid)?)),
            InitialSpec::File { path } => load_on(path, grid),
        }
    }

    pub fn forcing_parts(&self) -> Result<(RealField, RealField)> {
        let grid = self.torus()?;
        Ok((
            field(&self.forcing.f_plus, grid, "forcing.f_plus")?,
            field(&self.forcing.f_minus, grid, "forcing.f_minus")?,
        ))
    }

    pub fn has_forcing(&self) -> bool {
        !matches!(self.forcing.f_plus, FieldSpec::Zero) || !matches!(self.forcing.f_minus, FieldSpec::Zero)
    }

    /// Parameters of the normalized flow (`beta / alpha`, time in units of
    /// `alpha t`).
    pub fn flow_params(&self) -> FlowParams {
        let f = &self.flow;
        let mut p = FlowParams::new(f.beta / f.alpha, f.t_end * f.alpha);
        p.cfl = f.cfl;
        p.dt_max = f.dt_max * f.alpha;
        p.steady_tol = f.steady_tol;
        p.snapshot_stride = f.snapshot_stride;
        p.admissibility_floor = f.admissibility_floor;
        p.fd_fraction = self.monitors.fd_fraction;
        p.fd_triplets = self
            .monitors
            .enabled
            .iter()
            .any(|c| c == "lemma24" || c.starts_with("phi_"));
        if let Some(m) = f.max_steps {
            p.max_steps = m;
        }
        p.filter_order = f.filter_order;
        p
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        MonitorConfig {
            enabled: self.monitors.enabled.clone(),
            safety: self.monitors.safety,
            fd_constant: self.monitors.fd_constant,
            ..MonitorConfig::default()
        }
    }

    /// Replaces every seed in the configuration.
    pub fn override_seed(&mut self, seed: u64) {
        if let InitialSpec::Random { seed: s, .. } = &mut self.initial {
            *s = seed;
        }
        self.identities.fixture.seed = seed;
    }
}

fn series(constant: f64, terms: &[TrigTerm]) -> TrigSeries {
    TrigSeries {
        constant,
        terms: terms.to_vec(),
    }
}

fn field(spec: &FieldSpec, grid: TorusGrid, key: &str) -> Result<RealField> {
    match spec {
        FieldSpec::Zero => Ok(RealField::zeros(grid)),
        FieldSpec::Series { constant, terms } => Ok(series(*constant, terms).sample(grid)),
        FieldSpec::LogSeries { scale, constant, terms } => {
            let p = series(*constant, terms).sample(grid);
            if p.min() <= 0.0 {
                return Err(Error::Config(format!("{key}: log of a series with minimum {}", p.min())));
            }
            Ok(p.map(|v| scale * v.ln()))
        }
        FieldSpec::File { path } => load_on(path, grid),
    }
}

fn load_on(path: &Path, grid: TorusGrid) -> Result<RealField> {
    let f = io::load(path)?;
    if *f.grid() != grid {
        return Err(Error::Config(format!(
            "{} has dims {:?}, the configured grid is {:?}",
            path.display(),
            f.grid().dims(),
            grid.dims()
        )));
    }
    Ok(f)
}

/// Sweep exponents must lie in `(beta0, 1]`.
pub fn check_sweep_beta(beta: f64) -> Result<()> {
    let b0 = beta0();
    if !(beta <= 1.0) {
        return Err(Error::Config(format!("sweep beta {beta} exceeds 1")));
    }
    if !(beta > b0) {
        return Err(Error::BelowThreshold { beta, beta0: b0 });
    }
    Ok(())
}
