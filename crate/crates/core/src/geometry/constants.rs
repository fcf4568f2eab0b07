use serde::Serialize;

use super::{curvature, torsion, Background};
use crate::error::{Error, Result};

/// `(2 sqrt 3 - 3) / 3`, the smallest exponent for which the upper bound of
/// `lambda` is available.
pub fn beta0() -> f64 {
    (2.0 * 3f64.sqrt() - 3.0) / 3.0
}

/// `8 (1 + beta) / (beta (3 beta^2 + 6 beta - 1))`.
pub fn prop11_b(beta: f64) -> f64 {
    8.0 * (1.0 + beta) / (beta * (3.0 * beta * beta + 6.0 * beta - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantOptions {
    /// Multiplier applied to every grid maximum of a tensor norm.
    pub safety: f64,
}

impl Default for ConstantOptions {
    fn default() -> Self {
        Self { safety: 1.0 }
    }
}

/// Grid maxima of the background quantities that enter the constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryMaxima {
    /// `max |T0|^2`
    pub torsion_sq: f64,
    /// `max |nabla T0|`
    pub grad_torsion: f64,
    /// `max max(|Omega^w_{z zbar w}|, |Omega^z_{w wbar z}|)`
    pub mixed_curvature: f64,
    /// `max` over the grid of the curvature combinations of the Bochner step
    pub curvature_combination: f64,
    pub max_inv_g: f64,
    pub max_inv_h: f64,
}

impl GeometryMaxima {
    /// Curvatures are normalized by the background metric:
    /// `Omega^z_{w wbar z} = -(log g)_{w wbar} / h`,
    /// `Omega^w_{z zbar w} = -(log h)_{z zbar} / g`,
    /// `Omega^z_{z zbar z} = -(log g)_{z zbar} / g`,
    /// `Omega^w_{w wbar w} = -(log h)_{w wbar} / h`.
    pub fn from_background(bg: &Background, beta: f64, opts: ConstantOptions) -> Self {
        let t = torsion(bg);
        let c = curvature(bg);
        let (g, h) = (bg.g().data(), bg.h().data());
        let mut mixed = 0.0f64;
        let mut comb = 0.0f64;
        for i in 0..g.len() {
            let om_zwz = -c.log_g_wwbar.data()[i] / h[i];
            let om_wzw = -c.log_h_zzbar.data()[i] / g[i];
            let om_zzz = -c.log_g_zzbar.data()[i] / g[i];
            let om_www = -c.log_h_wwbar.data()[i] / h[i];
            mixed = mixed.max(om_zwz.abs()).max(om_wzw.abs());
            // Both pairings of the mixed curvatures with the factor curvatures
            // are covered; the larger one is kept.
            let candidates = [
                (om_zwz - beta * om_zzz).abs(),
                (beta * om_wzw - om_www).abs(),
                (om_wzw - beta * om_zzz).abs(),
                (beta * om_zwz - om_www).abs(),
            ];
            for v in candidates {
                comb = comb.max(v);
            }
        }
        Self {
            torsion_sq: opts.safety * t.max_norm_sq,
            grad_torsion: opts.safety * t.max_grad,
            mixed_curvature: opts.safety * mixed,
            curvature_combination: opts.safety * comb,
            max_inv_g: 1.0 / bg.g().min(),
            max_inv_h: 1.0 / bg.h().min(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop11Constants {
    pub b: f64,
    pub a: f64,
    pub c12: f64,
    pub c13: f64,
    pub c14: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Constant and quadratic coefficients of the pointwise bound
    /// `H Phi <= k0 + k2 |nu|^2` that precedes `C14`.
    pub k0: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub beta: f64,
    pub beta0: f64,
    pub c: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    pub a_prop9: f64,
    pub prop11: Option<Prop11Constants>,
    pub maxima: GeometryMaxima,
    pub options: ConstantOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantEntry {
    pub name: &'static str,
    pub value: f64,
    pub provenance: &'static str,
}

/// Deterministic scan of `(epsilon, delta)` over `i / 201`, `i = 1..=200`,
/// epsilon outermost. Returns the first point with `P <= target` and
/// `|P - target| <= 1% |target|`; when the window is never hit, the feasible
/// point closest to the target.
pub fn search_epsilon_delta(beta: f64) -> Option<(f64, f64)> {
    let target = beta * (1.0 - 6.0 * beta - 3.0 * beta * beta) / (8.0 * (1.0 + beta));
    let p = |e: f64, d: f64| -beta * beta * (1.0 - d) + beta * (1.0 - beta).powi(2) / (4.0 * (1.0 + beta - e));
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 1..=200 {
        let e = i as f64 / 201.0;
        for j in 1..=200 {
            let d = j as f64 / 201.0;
            let v = p(e, d);
            if v > target {
                continue;
            }
            let gap = target - v;
            if gap <= 0.01 * target.abs() {
                return Some((e, d));
            }
            if best.map_or(true, |b| gap < b.2) {
                best = Some((e, d, gap));
            }
        }
    }
    best.map(|(e, d, _)| (e, d))
}

impl ConstantsReport {
    pub fn from_maxima(
        maxima: GeometryMaxima,
        beta: f64,
        c0: f64,
        options: ConstantOptions,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("beta = {beta} outside (0, 1]")));
        }
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::Config(format!("C0 = {c0} must be positive")));
        }
        let m = maxima;
        let c = m.mixed_curvature;
        let c1 = c0 * m.grad_torsion;
        let c2 = c1 + beta * (1.0 - beta) * c0 * m.torsion_sq;
        let c3 = c2 + beta * c0.powi(3) * m.torsion_sq;
        let c4 = m.curvature_combination;
        let c5 = c0 * c4;
        let c6 = c5 + 2.0;
        let c7 = m.max_inv_g.max(m.max_inv_h) * c0 * c0 * m.torsion_sq;
        let c8 = c0.powi(3) * m.torsion_sq;
        let c9 = c0 * c0 * m.mixed_curvature;
        let c10 = c8 * (1.0 / beta + 2.0 - beta * beta);
        let a_prop9 = c7 / beta;
        let c11 = c10 + c9 * a_prop9 + c3 + c6;

        let prop11 = if beta > beta0() {
            let b = prop11_b(beta);
            let a = b * c7 / beta;
            let (epsilon, delta) = search_epsilon_delta(beta).ok_or_else(|| {
                Error::Numerical(format!("no admissible (epsilon, delta) for beta = {beta}"))
            })?;
            let c12 = c8 * (1.0 / epsilon + 1.0 / delta - beta * beta);
            let c13 = c0 * c0 * m.mixed_curvature;
            let k0 = c12 * b + c13 * a + b * c3 / 2.0;
            let k2 = b * (c6 + c3 / 2.0);
            Some(Prop11Constants {
                b,
                a,
                c12,
                c13,
                c14: k0 + k2,
                epsilon,
                delta,
                k0,
                k2,
            })
        } else {
            None
        };

        Ok(Self {
            beta,
            beta0: beta0(),
            c,
            c0,
            c1,
            c2,
            c3,
            c4,
            c5,
            c6,
            c7,
            c8,
            c9,
            c10,
            c11,
            a_prop9,
            prop11,
            maxima,
            options,
        })
    }

    pub fn prop11(&self) -> Result<&Prop11Constants> {
        self.prop11.as_ref().ok_or(Error::BelowThreshold {
            beta: self.beta,
            beta0: self.beta0,
        })
    }

    pub fn entries(&self) -> Vec<ConstantEntry> {
        let e = |name, value, provenance| ConstantEntry {
            name,
            value,
            provenance,
        };
        let mut out = vec![
            e("beta", self.beta, "flow exponent"),
            e("beta0", self.beta0, "(2 sqrt3 - 3)/3"),
            e("C", self.c, "max of the mixed curvatures, lower bound of lambda"),
            e("C0", self.c0, "sup (1/lambda + 1/eta) over the trajectory"),
            e("C1", self.c1, "C0 * max|grad T0|"),
            e("C2", self.c2, "C1 + beta(1-beta) C0 max|T0|^2"),
            e("C3", self.c3, "C2 + beta C0^3 max|T0|^2"),
            e("C4", self.c4, "max of mixed minus beta-weighted factor curvatures"),
            e("C5", self.c5, "C0 * C4"),
            e("C6", self.c6, "C5 + 2"),
            e("C7", self.c7, "max(1/g, 1/h) C0^2 max|T0|^2"),
            e("C8", self.c8, "C0^3 max|T0|^2"),
            e("C9", self.c9, "C0^2 max mixed curvature"),
            e("C10", self.c10, "C8 (1/beta + 2 - beta^2)"),
            e("C11", self.c11, "C10 + C9 A + C3 + C6, mixed-norm growth rate"),
            e("A_prop9", self.a_prop9, "C7 / beta"),
        ];
        if let Some(p) = &self.prop11 {
            out.extend([
                e("B", p.b, "8(1+beta) / (beta(3beta^2 + 6beta - 1))"),
                e("A_prop11", p.a, "B C7 / beta"),
                e("C12", p.c12, "C8 (1/epsilon + 1/delta - beta^2)"),
                e("C13", p.c13, "C0^2 max mixed curvature"),
                e("C14", p.c14, "(C12 B + C13 A + B C3/2) + B (C6 + C3/2)"),
                e("epsilon", p.epsilon, "grid search, first hit"),
                e("delta", p.delta, "grid search, first hit"),
            ]);
        }
        out
    }
}

/// Assembles every constant for `bg` at exponent `beta` with the given `C0`.
pub fn constants(bg: &Background, beta: f64, c0: f64, opts: ConstantOptions) -> Result<ConstantsReport> {
    let maxima = GeometryMaxima::from_background(bg, beta, opts);
    ConstantsReport::from_maxima(maxima, beta, c0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{kahler_product_background, pluriclosed_background, PluriMode};
    use crate::grid::{RealField, TorusGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn beta0_and_b_values() {
        assert_relative_eq!(beta0(), 0.154_700_538_379_251_5, max_relative = 1e-12);
        assert_relative_eq!(prop11_b(0.5), 12.0 / 1.375, max_relative = 1e-12);
        assert_relative_eq!(prop11_b(1.0), 16.0 / 8.0, max_relative = 1e-15);
    }

    #[test]
    fn flat_kahler_collapse() {
        let bg = crate::geometry::Background::flat(TorusGrid::cube(8).unwrap());
        for beta in [0.3, 0.5, 0.9, 1.0] {
            let r = constants(&bg, beta, 2.0, ConstantOptions::default()).unwrap();
            assert_eq!((r.c3, r.c7, r.c8, r.a_prop9), (0.0, 0.0, 0.0, 0.0));
            assert_eq!(r.c6, 2.0);
            assert_eq!(r.c11, 2.0);
            let p = r.prop11().unwrap();
            assert_eq!(p.a, 0.0);
            assert_eq!(p.c14, 2.0 * p.b);
        }
    }

    #[test]
    fn curved_kahler_products_keep_torsion_constants_zero() {
        let grid = TorusGrid::cube(16).unwrap();
        let g = RealField::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let h = RealField::constant(grid, 1.0);
        let bg = kahler_product_background(&g, &h).unwrap();
        let r = constants(&bg, 0.5, 2.0, ConstantOptions::default()).unwrap();
        assert_eq!((r.c3, r.c7, r.c8), (0.0, 0.0, 0.0));
        assert_eq!(r.prop11().unwrap().a, 0.0);
        // The factor curvature of g enters the Bochner constant.
        assert!(r.c6 > 2.0);
    }

    #[test]
    fn below_threshold_is_reported() {
        let bg = crate::geometry::Background::flat(TorusGrid::cube(8).unwrap());
        let r = constants(&bg, 0.1, 2.0, ConstantOptions::default()).unwrap();
        assert!(matches!(r.prop11(), Err(Error::BelowThreshold { .. })));
        assert!(constants(&bg, 1.5, 2.0, ConstantOptions::default()).is_err());
        assert!(constants(&bg, 0.5, 0.0, ConstantOptions::default()).is_err());
    }

    #[test]
    fn epsilon_delta_search_meets_target() {
        for beta in [0.3, 0.5, 0.7, 0.95, 1.0] {
            let (e, d) = search_epsilon_delta(beta).unwrap();
            let target = beta * (1.0 - 6.0 * beta - 3.0 * beta * beta) / (8.0 * (1.0 + beta));
            let p = -beta * beta * (1.0 - d) + beta * (1.0 - beta).powi(2) / (4.0 * (1.0 + beta - e));
            assert!(p <= target);
            assert!((p - target).abs() <= 0.01 * target.abs());
            // B * P <= -1 is what the upper bound of lambda needs.
            assert!(prop11_b(beta) * p <= -1.0 + 1e-12);
        }
    }

    #[test]
    fn pluriclosed_constants_are_positive() {
        let grid = TorusGrid::cube(16).unwrap();
        let bg = pluriclosed_background(grid, 1.0, 1.0, &[PluriMode { k: 1, m: 1, a: 0.5 }]).unwrap();
        let r = constants(&bg, 0.7, 2.5, ConstantOptions::default()).unwrap();
        assert!(r.c > 0.0 && r.c1 > 0.0 && r.c7 > 0.0 && r.c8 > 0.0);
        assert!(r.c6 >= 2.0);
        assert!(r.entries().iter().all(|e| e.value.is_finite() && e.value >= 0.0));
    }

    fn all_values(r: &ConstantsReport) -> Vec<f64> {
        r.entries()
            .into_iter()
            .filter(|e| !matches!(e.name, "epsilon" | "delta" | "beta" | "beta0"))
            .map(|e| e.value)
            .collect()
    }

    proptest! {
        #[test]
        fn inflating_maxima_never_decreases_constants(
            beta in 0.2f64..1.0,
            c0 in 2.0f64..10.0,
            t in 0.0f64..1.0,
            grad in 0.0f64..1.0,
            mixed in 0.0f64..1.0,
            comb in 0.0f64..1.0,
            bump in 1.0f64..3.0,
        ) {
            let base = GeometryMaxima {
                torsion_sq: t,
                grad_torsion: grad,
                mixed_curvature: mixed,
                curvature_combination: comb,
                max_inv_g: 1.2,
                max_inv_h: 1.1,
            };
            let opts = ConstantOptions::default();
            let r0 = ConstantsReport::from_maxima(base, beta, c0, opts).unwrap();
            for inflated in [
                GeometryMaxima { torsion_sq: t * bump, ..base },
                GeometryMaxima { grad_torsion: grad * bump, ..base },
                GeometryMaxima { mixed_curvature: mixed * bump, ..base },
                GeometryMaxima { curvature_combination: comb * bump, ..base },
            ] {
                let r1 = ConstantsReport::from_maxima(inflated, beta, c0, opts).unwrap();
                for (a, b) in all_values(&r0).iter().zip(all_values(&r1)) {
                    prop_assert!(b >= *a);
                }
            }
        }

        #[test]
        fn b_diverges_at_threshold_and_tends_to_two(beta in 0.1548f64..1.0) {
            let b = prop11_b(beta);
            prop_assert!(b > 2.0 - 1e-12);
            prop_assert!(prop11_b(beta0() + 1e-9) > 1e6);
        }
    }
}
