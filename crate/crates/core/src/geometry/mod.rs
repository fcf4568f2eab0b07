//! Background metrics `g |dz|^2 + h |dw|^2`, their torsion and curvature,
//! and the constants that feed the bound monitors.

mod constants;
mod profile;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Deriv, RealField, TorusGrid};

pub use constants::{
    beta0, constants, prop11_b, search_epsilon_delta, ConstantEntry, ConstantOptions,
    ConstantsReport, GeometryMaxima, Prop11Constants,
};
pub use profile::{TrigSeries, TrigTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    KahlerProduct,
    PluriclosedGeneral,
}

/// One separable mode `a * cos(2 pi k x1) * cos(2 pi m x3)` of the
/// pluriclosed recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluriMode {
    pub k: u32,
    pub m: u32,
    pub a: f64,
}

/// Spatial derivatives of the background used throughout the crate.
#[derive(Debug, Clone)]
pub struct BackgroundDerivs {
    pub g_z: ComplexField,
    pub g_w: ComplexField,
    pub h_z: ComplexField,
    pub h_w: ComplexField,
    pub g_zzbar: RealField,
    pub g_wwbar: RealField,
    pub h_zzbar: RealField,
    pub h_wwbar: RealField,
    pub log_g_zzbar: RealField,
    pub log_g_wwbar: RealField,
    pub log_h_zzbar: RealField,
    pub log_h_wwbar: RealField,
}

/// Validated background metric.
#[derive(Debug, Clone)]
pub struct Background {
    g: RealField,
    h: RealField,
    kind: BackgroundKind,
    descriptor: serde_json::Value,
    derivs: OnceLock<BackgroundDerivs>,
}

const PLURICLOSED_TOL: f64 = 1e-10;
const SEPARABLE_TOL: f64 = 1e-12;

fn check_positive(name: &str, f: &RealField) -> Result<()> {
    let min = f.min();
    if min <= 0.0 {
        return Err(Error::Positivity(format!("min {name} = {min}")));
    }
    Ok(())
}

/// Largest deviation of `f` from its values on the slice where the given
/// two axes are zero.
fn factor_dependence(f: &RealField, axes: [usize; 2]) -> f64 {
    let grid = f.grid();
    let mut worst = 0.0f64;
    for i in 0..f.len() {
        let mut idx = grid.multi_index(i);
        idx[axes[0]] = 0;
        idx[axes[1]] = 0;
        worst = worst.max((f.data()[i] - f.data()[grid.index(idx)]).abs());
    }
    worst
}

impl Background {
    /// Validates positivity, the pluriclosed condition and, for Kähler
    /// products, separability.
    pub fn new(g: RealField, h: RealField, kind: BackgroundKind) -> Result<Self> {
        let bg = Self::new_unchecked(g, h, kind)?;
        let residual = verify_pluriclosed(&bg);
        let limit = PLURICLOSED_TOL * (bg.g.sup_norm() + bg.h.sup_norm());
        if residual > limit {
            return Err(Error::Config(format!(
                "background is not pluriclosed: residual {residual:e} > {limit:e}"
            )));
        }
        if kind == BackgroundKind::KahlerProduct {
            let dg = factor_dependence(&bg.g, [2, 3]);
            let dh = factor_dependence(&bg.h, [0, 1]);
            if dg > SEPARABLE_TOL * bg.g.sup_norm() || dh > SEPARABLE_TOL * bg.h.sup_norm() {
                return Err(Error::Config(format!(
                    "Kähler product needs g = g(z) and h = h(w); deviations {dg:e}, {dh:e}"
                )));
            }
        }
        Ok(bg)
    }

    /// Positivity only. Used for fixtures that deliberately break the
    /// pluriclosed condition.
    pub fn new_unchecked(g: RealField, h: RealField, kind: BackgroundKind) -> Result<Self> {
        if g.grid() != h.grid() {
            return Err(Error::Config("g and h live on different grids".into()));
        }
        check_positive("g", &g)?;
        check_positive("h", &h)?;
        Ok(Self {
            g,
            h,
            kind,
            descriptor: serde_json::json!({ "kind": kind, "source": "fields" }),
            derivs: OnceLock::new(),
        })
    }

    pub fn flat(grid: TorusGrid) -> Self {
        kahler_product_background(&RealField::constant(grid, 1.0), &RealField::constant(grid, 1.0))
            .expect("flat background is valid")
    }

    pub fn with_descriptor(mut self, descriptor: serde_json::Value) -> Self {
        self.descriptor = descriptor;
        self
    }

    pub fn descriptor(&self) -> &serde_json::Value {
        &self.descriptor
    }

    pub fn g(&self) -> &RealField {
        &self.g
    }

    pub fn h(&self) -> &RealField {
        &self.h
    }

    pub fn kind(&self) -> BackgroundKind {
        self.kind
    }

    pub fn grid(&self) -> &TorusGrid {
        self.g.grid()
    }

    pub fn is_kahler(&self) -> bool {
        self.kind == BackgroundKind::KahlerProduct
    }

    /// True when both coefficients are constant.
    pub fn is_constant(&self) -> bool {
        let spread = |f: &RealField| f.max() - f.min();
        spread(&self.g) <= SEPARABLE_TOL * self.g.sup_norm()
            && spread(&self.h) <= SEPARABLE_TOL * self.h.sup_norm()
    }

    pub fn derivs(&self) -> &BackgroundDerivs {
        self.derivs.get_or_init(|| {
            let gs = self.g.spectrum();
            let hs = self.h.spectrum();
            let (g_zzbar, g_wwbar) = gs.real_pair(Deriv::ZZBAR, Deriv::WWBAR);
            let (h_zzbar, h_wwbar) = hs.real_pair(Deriv::ZZBAR, Deriv::WWBAR);
            let (log_g_zzbar, log_g_wwbar) = self.g.map(f64::ln).laplacians();
            let (log_h_zzbar, log_h_wwbar) = self.h.map(f64::ln).laplacians();
            BackgroundDerivs {
                g_z: gs.derivative(Deriv::Z),
                g_w: gs.derivative(Deriv::W),
                h_z: hs.derivative(Deriv::Z),
                h_w: hs.derivative(Deriv::W),
                g_zzbar,
                g_wwbar,
                h_zzbar,
                h_wwbar,
                log_g_zzbar,
                log_g_wwbar,
                log_h_zzbar,
                log_h_wwbar,
            }
        })
    }
}

pub fn kahler_product_background(g_profile: &RealField, h_profile: &RealField) -> Result<Background> {
    Background::new(g_profile.clone(), h_profile.clone(), BackgroundKind::KahlerProduct)
}

/// `g = c_g + sum a p_k Q_m`, `h = c_h - sum a P_k q_m` with
/// `p_k = cos(2 pi k x1 / L1)`, `q_m = cos(2 pi m x3 / L3)` and
/// `P_zzbar = p`, `Q_wwbar = q`, so that `g_wwbar + h_zzbar = 0` exactly.
pub fn pluriclosed_background(
    grid: TorusGrid,
    c_g: f64,
    c_h: f64,
    modes: &[PluriMode],
) -> Result<Background> {
    use std::f64::consts::PI;
    let [l1, _, l3, _] = grid.periods();
    for mode in modes {
        if mode.k == 0 || mode.m == 0 {
            return Err(Error::Config("pluriclosed modes need k, m >= 1".into()));
        }
    }
    let sample = |x: [f64; 4], sign_h: bool| -> f64 {
        let mut acc = if sign_h { c_h } else { c_g };
        for mode in modes {
            let kz = 2.0 * PI * mode.k as f64 / l1;
            let kw = 2.0 * PI * mode.m as f64 / l3;
            let p = (kz * x[0]).cos();
            let q = (kw * x[2]).cos();
            // P_zzbar = -kz^2/4 P, so P = -4 p / kz^2
            if sign_h {
                let big_p = -4.0 * p / (kz * kz);
                acc -= mode.a * big_p * q;
            } else {
                let big_q = -4.0 * q / (kw * kw);
                acc += mode.a * p * big_q;
            }
        }
        acc
    };
    let g = RealField::from_fn(grid, |x| sample(x, false));
    let h = RealField::from_fn(grid, |x| sample(x, true));
    let kind = if modes.iter().all(|m| m.a == 0.0) {
        BackgroundKind::KahlerProduct
    } else {
        BackgroundKind::PluriclosedGeneral
    };
    Ok(Background::new(g, h, kind)?.with_descriptor(serde_json::json!({
        "kind": kind,
        "source": "pluriclosed_modes",
        "c_g": c_g,
        "c_h": c_h,
        "modes": modes,
    })))
}

/// `||g_wwbar + h_zzbar||_inf`.
pub fn verify_pluriclosed(bg: &Background) -> f64 {
    let d = bg.derivs();
    d.g_wwbar.add(&d.h_zzbar).sup_norm()
}

/// `||(g lambda)_wwbar + (h eta)_zzbar||_inf` for a given pair of traces.
pub fn verify_pluriclosed_state(bg: &Background, lambda: &RealField, eta: &RealField) -> f64 {
    let gl = bg.g().mul(lambda);
    let he = bg.h().mul(eta);
    let (_, a) = gl.laplacians();
    let (b, _) = he.laplacians();
    a.add(&b).sup_norm()
}

#[derive(Debug, Clone)]
pub struct TorsionReport {
    /// `(1/h)|g_w/g|^2 + (1/g)|h_z/h|^2`
    pub norm_sq: RealField,
    pub max_norm_sq: f64,
    pub max_grad: f64,
}

pub fn torsion(bg: &Background) -> TorsionReport {
    let d = bg.derivs();
    let (g, h) = (bg.g().data(), bg.h().data());
    let n = g.len();
    let mut norm_sq = vec![0.0; n];
    for i in 0..n {
        norm_sq[i] = (d.g_w.data()[i] / g[i]).norm_sqr() / h[i] + (d.h_z.data()[i] / h[i]).norm_sqr() / g[i];
    }
    let norm_sq = RealField::new(*bg.grid(), norm_sq).expect("finite torsion");
    let max_norm_sq = norm_sq.max();
    TorsionReport {
        max_grad: grad_torsion_norm_sq(bg).max().max(0.0).sqrt(),
        norm_sq,
        max_norm_sq,
    }
}

/// Pointwise `|nabla T0|^2` from the Chern-covariant derivatives of the
/// torsion components `t1 = -g_w`, `t2 = h_z`, with the diagonal background
/// connection and background-metric normalization.
pub fn grad_torsion_norm_sq(bg: &Background) -> RealField {
    let gs = bg.g().spectrum();
    let hs = bg.h().spectrum();
    let d = bg.derivs();
    // derivatives of t1 = -g_w and t2 = h_z along z, zbar, w, wbar
    let t1_d = [
        gs.derivative(Deriv::new(1, 0, 1, 0)),
        gs.derivative(Deriv::new(0, 1, 1, 0)),
        gs.derivative(Deriv::new(0, 0, 2, 0)),
        gs.derivative(Deriv::new(0, 0, 1, 1)),
    ];
    let t2_d = [
        hs.derivative(Deriv::new(2, 0, 0, 0)),
        hs.derivative(Deriv::new(1, 1, 0, 0)),
        hs.derivative(Deriv::new(1, 0, 1, 0)),
        hs.derivative(Deriv::new(1, 0, 0, 1)),
    ];
    let (g, h) = (bg.g().data(), bg.h().data());
    let mut out = vec![0.0; g.len()];
    for i in 0..g.len() {
        let t1 = -d.g_w.data()[i];
        let t2 = d.h_z.data()[i];
        let lg = [d.g_z.data()[i] / g[i], d.g_w.data()[i] / g[i]];
        let lh = [d.h_z.data()[i] / h[i], d.h_w.data()[i] / h[i]];
        let metric = [g[i], h[i]];
        let mut acc = 0.0;
        for k in 0..2 {
            let d1 = -t1_d[2 * k].data()[i];
            let d1b = -t1_d[2 * k + 1].data()[i];
            let d2 = t2_d[2 * k].data()[i];
            let d2b = t2_d[2 * k + 1].data()[i];
            let conn = lg[k] + lh[k];
            let n1 = (d1 - conn * t1).norm_sqr() + (d1b - lg[k].conj() * t1).norm_sqr();
            let n2 = (d2 - conn * t2).norm_sqr() + (d2b - lh[k].conj() * t2).norm_sqr();
            acc += (n1 / (g[i] * g[i] * h[i]) + n2 / (g[i] * h[i] * h[i])) / metric[k];
        }
        out[i] = acc;
    }
    RealField::new(*bg.grid(), out).expect("finite torsion derivative")
}

/// The four curvature components of the split line bundles and whether the
/// sign condition that improves the lower bound of `lambda` holds.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub log_g_zzbar: RealField,
    pub log_g_wwbar: RealField,
    pub log_h_zzbar: RealField,
    pub log_h_wwbar: RealField,
    pub cor8_holds: bool,
}

pub const CURVATURE_SIGN_TOL: f64 = 1e-10;

pub fn curvature(bg: &Background) -> CurvatureReport {
    let d = bg.derivs();
    let cor8_holds =
        d.log_h_zzbar.min() >= -CURVATURE_SIGN_TOL && d.log_g_wwbar.min() >= -CURVATURE_SIGN_TOL;
    CurvatureReport {
        log_g_zzbar: d.log_g_zzbar.clone(),
        log_g_wwbar: d.log_g_wwbar.clone(),
        log_h_zzbar: d.log_h_zzbar.clone(),
        log_h_wwbar: d.log_h_wwbar.clone(),
        cor8_holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::cube(16).unwrap()
    }

    #[test]
    fn flat_background_is_trivial() {
        let bg = Background::flat(grid());
        assert!(bg.is_kahler() && bg.is_constant());
        assert_eq!(verify_pluriclosed(&bg), 0.0);
        let t = torsion(&bg);
        assert_eq!(t.max_norm_sq, 0.0);
        assert_eq!(t.max_grad, 0.0);
        let c = curvature(&bg);
        assert!(c.cor8_holds);
        assert_eq!(c.log_g_zzbar.sup_norm(), 0.0);
    }

    #[test]
    fn kahler_product_validation() {
        let g = RealField::from_fn(grid(), |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let h = RealField::constant(grid(), 1.0);
        let bg = kahler_product_background(&g, &h).unwrap();
        assert!(bg.derivs().g_w.sup_norm() < 1e-13);
        assert!(curvature(&bg).cor8_holds);
        assert!(curvature(&bg).log_g_wwbar.sup_norm() < 1e-13);

        let bad = RealField::from_fn(grid(), |x| 1.0 - 1.2 * (2.0 * PI * x[0]).cos());
        assert!(matches!(kahler_product_background(&bad, &h), Err(Error::Positivity(_))));

        let mixed = RealField::from_fn(grid(), |x| 1.0 + 0.1 * (2.0 * PI * x[2]).cos());
        assert!(kahler_product_background(&mixed, &h).is_err());
    }

    #[test]
    fn pluriclosed_recipe_matches_closed_form() {
        let modes = [PluriMode { k: 1, m: 1, a: 1.0 }];
        let bg = pluriclosed_background(grid(), 1.0, 1.0, &modes).unwrap();
        for i in 0..bg.grid().len() {
            let x = bg.grid().point(i);
            let cc = (2.0 * PI * x[0]).cos() * (2.0 * PI * x[2]).cos();
            assert_abs_diff_eq!(bg.g().data()[i], 1.0 - cc / (PI * PI), epsilon = 1e-14);
            assert_abs_diff_eq!(bg.h().data()[i], 1.0 + cc / (PI * PI), epsilon = 1e-14);
            assert_abs_diff_eq!(bg.derivs().g_wwbar.data()[i], cc, epsilon = 1e-12);
        }
        assert!(verify_pluriclosed(&bg) <= 1e-12);
        assert_eq!(bg.kind(), BackgroundKind::PluriclosedGeneral);
    }

    #[test]
    fn pluriclosed_positivity_failure() {
        let modes = [PluriMode { k: 1, m: 1, a: 2.0 * PI * PI }];
        assert!(matches!(
            pluriclosed_background(grid(), 1.0, 1.0, &modes),
            Err(Error::Positivity(_))
        ));
        let flat = pluriclosed_background(grid(), 1.0, 1.0, &[]).unwrap();
        assert!(flat.is_kahler());
    }

    #[test]
    fn residual_of_non_pluriclosed_metric() {
        let g = RealField::from_fn(grid(), |x| 1.0 + 0.1 * (2.0 * PI * x[2]).cos());
        let h = RealField::constant(grid(), 1.0);
        let bg = Background::new_unchecked(g, h, BackgroundKind::PluriclosedGeneral).unwrap();
        assert_abs_diff_eq!(verify_pluriclosed(&bg), 0.1 * PI * PI, epsilon = 1e-12);
        assert!(Background::new(bg.g().clone(), bg.h().clone(), BackgroundKind::PluriclosedGeneral).is_err());
    }

    #[test]
    fn curvature_sign_condition_fails_for_indefinite_log_g() {
        let g = RealField::from_fn(grid(), |x| (0.1 * (2.0 * PI * x[2]).cos()).exp());
        let h = RealField::constant(grid(), 1.0);
        let bg = Background::new_unchecked(g, h, BackgroundKind::PluriclosedGeneral).unwrap();
        let c = curvature(&bg);
        for i in 0..bg.grid().len() {
            let x = bg.grid().point(i);
            assert_abs_diff_eq!(c.log_g_wwbar.data()[i], -0.1 * PI * PI * (2.0 * PI * x[2]).cos(), epsilon = 1e-12);
        }
        assert!(!c.cor8_holds);
    }

    #[test]
    fn torsion_norm_matches_closed_form() {
        let modes = [PluriMode { k: 1, m: 1, a: 1.0 }];
        let bg = pluriclosed_background(grid(), 1.0, 1.0, &modes).unwrap();
        let t = torsion(&bg);
        let pi2 = PI * PI;
        for i in 0..bg.grid().len() {
            let x = bg.grid().point(i);
            let (c1, s1) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
            let (c3, s3) = ((2.0 * PI * x[2]).cos(), (2.0 * PI * x[2]).sin());
            let g = 1.0 - c1 * c3 / pi2;
            let h = 1.0 + c1 * c3 / pi2;
            // g_w = (1/2) d_3 g = c1 s3 / pi, h_z = (1/2) d_1 h = -s1 c3 / pi
            let gw = c1 * s3 / PI;
            let hz = -s1 * c3 / PI;
            let expect = (gw / g).powi(2) / h + (hz / h).powi(2) / g;
            assert_abs_diff_eq!(t.norm_sq.data()[i], expect, epsilon = 1e-12);
        }
        assert!(t.max_grad > 0.0);
    }
}
