use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use pluriflow::experiments::{exit_code, parse_config_str};
use pluriflow::flow::{normalize_compat, normalize_exponents, FlowParams, FlowState, DEFAULT_FLOOR};
use pluriflow::geometry::{
    beta0, constants, kahler_product_background, pluriclosed_background, prop11_b, verify_pluriclosed,
    Background, ConstantOptions, PluriMode,
};
use pluriflow::grid::{io, poisson_solve_factor, Deriv, Factor, RealField, TorusGrid};
use pluriflow::identities::{band_limited_field, Band};
use pluriflow::monitors::{legendre_w, CheckRecord};

fn cube8() -> TorusGrid {
    TorusGrid::cube(8).unwrap()
}

fn smooth(seed: u64, amplitude: f64) -> RealField {
    band_limited_field(cube8(), seed, amplitude, Band::new(1, 2).unwrap())
}

fn pluri_bg(c_g: f64, c_h: f64, a: f64, k: u32, m: u32) -> Background {
    pluriclosed_background(cube8(), c_g, c_h, &[PluriMode { k, m, a }]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_dims_must_be_powers_of_two_from_eight(n in 1usize..80, l in -1.0f64..3.0) {
        let ok = n >= 8 && n.is_power_of_two() && l > 0.0;
        prop_assert_eq!(TorusGrid::new([n, 8, 8, 8], [l, 1.0, 1.0, 1.0]).is_ok(), ok);
    }

    #[test]
    fn fields_reject_wrong_length_and_non_finite(extra in 1usize..5, at in 0usize..4096) {
        let grid = cube8();
        prop_assert!(RealField::new(grid, vec![0.0; grid.len() + extra]).is_err());
        let mut data = vec![1.0; grid.len()];
        data[at] = f64::NAN;
        prop_assert!(RealField::new(grid, data).is_err());
    }

    #[test]
    fn trig_monomials_differentiate_exactly(k in prop::array::uniform4(-3i32..=3)) {
        let theta = |x: [f64; 4]| 2.0 * PI * (0..4).map(|i| k[i] as f64 * x[i]).sum::<f64>();
        let f = RealField::from_fn(cube8(), |x| theta(x).cos());
        let dz = f.deriv(Deriv::Z);
        let want = Complex64::new(-PI * k[0] as f64, PI * k[1] as f64);
        let lzz = -PI * PI * (k[0] * k[0] + k[1] * k[1]) as f64;
        let lww = -PI * PI * (k[2] * k[2] + k[3] * k[3]) as f64;
        let (zz, ww) = f.laplacians();
        for i in 0..f.len() {
            let x = f.grid().point(i);
            prop_assert!((dz.data()[i] - want * theta(x).sin()).norm() < 1e-11);
            prop_assert!((zz.data()[i] - lzz * theta(x).cos()).abs() < 1e-10);
            prop_assert!((ww.data()[i] - lww * theta(x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn ddbar_of_real_fields_is_real(seed in 0u64..1000) {
        let f = smooth(seed, 1.0);
        for d in [Deriv::ZZBAR, Deriv::WWBAR, Deriv::new(1, 1, 1, 1)] {
            let c = f.deriv(d);
            prop_assert!(c.im().sup_norm() <= 1e-12 * (1.0 + c.re().sup_norm()));
        }
    }

    #[test]
    fn poisson_solve_inverts_the_factor_laplacian(seed in 0u64..1000, on_w in any::<bool>()) {
        let v = smooth(seed, 1.0);
        let (factor, d) = if on_w { (Factor::W, Deriv::WWBAR) } else { (Factor::Z, Deriv::ZZBAR) };
        let rhs = v.deriv(d).re();
        let sol = poisson_solve_factor(&rhs, factor).unwrap();
        let back = sol.deriv(d).re();
        prop_assert!(back.sub(&rhs).sup_norm() <= 1e-10 * (1.0 + rhs.sup_norm()));
    }

    #[test]
    fn poisson_solve_rejects_nonzero_slice_means(c in 0.01f64..5.0) {
        let rhs = RealField::constant(cube8(), c);
        prop_assert!(poisson_solve_factor(&rhs, Factor::Z).is_err());
    }

    #[test]
    fn stats_are_ordered(seed in 0u64..1000, shift in -3.0f64..3.0) {
        let s = smooth(seed, 2.0).shift(shift).stats();
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }

    #[test]
    fn field_files_round_trip_bitwise(seed in 0u64..1000) {
        let f = smooth(seed, 1.0);
        let mut buf = Vec::new();
        io::write_field(&mut buf, &f).unwrap();
        let back = io::read_field(buf.as_slice()).unwrap();
        prop_assert_eq!(back.data(), f.data());
    }

    #[test]
    fn pluriclosed_backgrounds_are_pluriclosed(
        c_g in 1.5f64..4.0, c_h in 1.5f64..4.0, a in -0.5f64..0.5, k in 1u32..3, m in 1u32..3,
    ) {
        let bg = pluri_bg(c_g, c_h, a, k, m);
        prop_assert!(bg.g().min() > 0.0 && bg.h().min() > 0.0);
        let scale = bg.g().sup_norm() + bg.h().sup_norm();
        prop_assert!(verify_pluriclosed(&bg) <= 1e-10 * scale);
    }

    #[test]
    fn constants_are_finite_and_nonnegative(
        a in -0.5f64..0.5, beta in 0.2f64..=1.0, c0 in 2.0f64..10.0,
    ) {
        let bg = pluri_bg(2.0, 2.0, a, 1, 1);
        let r = constants(&bg, beta, c0, ConstantOptions::default()).unwrap();
        for e in r.entries() {
            prop_assert!(e.value.is_finite(), "{} = {}", e.name, e.value);
        }
        for v in [r.c, r.c1, r.c2, r.c3, r.c4, r.c5, r.c7, r.c8, r.c9, r.c10, r.a_prop9] {
            prop_assert!(v >= 0.0);
        }
        prop_assert!(r.c6 >= 2.0);
        prop_assert!(r.c11 >= r.c6);
    }

    #[test]
    fn kahler_products_have_no_torsion_constants(
        ag in -0.4f64..0.4, ah in -0.4f64..0.4, beta in 0.2f64..=1.0,
    ) {
        let grid = cube8();
        let g = RealField::from_fn(grid, |x| 1.0 + ag * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin());
        let h = RealField::from_fn(grid, |x| 1.0 + ah * (2.0 * PI * x[3]).cos());
        let bg = kahler_product_background(&g, &h).unwrap();
        let r = constants(&bg, beta, 3.0, ConstantOptions::default()).unwrap();
        prop_assert_eq!((r.c3, r.c7, r.c8, r.a_prop9), (0.0, 0.0, 0.0, 0.0));
        prop_assert_eq!(r.c11, r.c6);
        let p = r.prop11().unwrap();
        prop_assert_eq!(p.a, 0.0);
    }

    #[test]
    fn kahler_profiles_must_separate(a in 0.05f64..0.4) {
        let grid = cube8();
        let g = RealField::from_fn(grid, |x| 1.0 + a * (2.0 * PI * x[2]).cos());
        let h = RealField::constant(grid, 1.0);
        prop_assert!(kahler_product_background(&g, &h).is_err());
    }

    #[test]
    fn prop11_b_matches_its_closed_form(beta in 0.16f64..=1.0) {
        let want = 8.0 * (1.0 + beta) / (beta * (3.0 * beta * beta + 6.0 * beta - 1.0));
        prop_assert!((prop11_b(beta) - want).abs() <= 1e-12 * want);
        prop_assert!(beta > beta0());
    }

    #[test]
    fn states_cache_the_flow_speed(seed in 0u64..1000, beta in 0.05f64..=1.0, a in -0.3f64..0.3) {
        let bg = pluri_bg(2.0, 2.0, a, 1, 1);
        let u = smooth(seed, 0.02);
        let s = FlowState::new(u, 0.0, &bg, beta, None, DEFAULT_FLOOR).unwrap();
        prop_assert!(s.lambda.min() > DEFAULT_FLOOR && s.eta.min() > DEFAULT_FLOOR);
        let (lzz, lww) = s.u.laplacians();
        for i in 0..s.u.len() {
            let l = 1.0 + lzz.data()[i] / bg.g().data()[i];
            let e = 1.0 - lww.data()[i] / bg.h().data()[i];
            prop_assert!((s.lambda.data()[i] - l).abs() < 1e-13);
            prop_assert!((s.eta.data()[i] - e).abs() < 1e-13);
            let speed = beta * l.ln() - e.ln();
            prop_assert!((s.du_dt.data()[i] - speed).abs() < 1e-13);
        }
    }

    #[test]
    fn inadmissible_data_is_rejected(c in 1.5f64..5.0) {
        let bg = Background::flat(cube8());
        let u = RealField::from_fn(cube8(), |x| c / (PI * PI) * (2.0 * PI * x[0]).cos());
        prop_assert!(FlowState::new(u, 0.0, &bg, 0.5, None, DEFAULT_FLOOR).is_err());
    }

    #[test]
    fn flow_params_ranges(beta in -0.5f64..1.5, cfl in -0.5f64..1.5) {
        let mut p = FlowParams::new(beta, 1.0);
        p.cfl = cfl;
        let ok = beta > 0.0 && beta <= 1.0 && cfl > 0.0 && cfl <= 1.0;
        prop_assert_eq!(p.validate().is_ok(), ok);
    }

    #[test]
    fn exponent_normalization(alpha in 0.1f64..3.0, ratio in 0.01f64..1.5, seed in 0u64..100) {
        let f = smooth(seed, 1.0);
        let beta = ratio * alpha;
        match normalize_exponents(alpha, beta, &f) {
            Ok(n) => {
                prop_assert!(ratio <= 1.0 + 1e-12);
                prop_assert!((n.beta - ratio).abs() < 1e-12);
                prop_assert_eq!(n.time_scale, alpha);
                prop_assert!(n.f.scale(alpha).sub(&f).sup_norm() < 1e-12);
            }
            Err(e) => {
                prop_assert!(ratio > 1.0);
                prop_assert_eq!(exit_code(&e), 2);
            }
        }
    }

    #[test]
    fn compatibility_normalization_holds(
        a in -0.4f64..0.4, beta in 0.2f64..=1.0, s1 in 0u64..100, s2 in 0u64..100, c in -1.0f64..1.0,
    ) {
        let bg = pluri_bg(2.0, 2.0, a, 1, 1);
        let fp = smooth(s1, 0.3).shift(c);
        let fm = smooth(s2, 0.3).shift(-c);
        let (fp, fm) = normalize_compat(&bg, &fp, &fm, beta).unwrap();
        let plus = bg.g().zip_map(&fp, |g, f| g * (f / beta).exp()).integral() / bg.g().integral();
        let minus = bg.h().zip_map(&fm, |h, f| h * (-f).exp()).integral() / bg.h().integral();
        prop_assert!((plus - 1.0).abs() < 1e-12);
        prop_assert!((minus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn check_records_pass_iff_margin_nonnegative(
        obs in -10.0f64..10.0, bound in -10.0f64..10.0, tol in 0.0f64..1.0,
    ) {
        let up = CheckRecord::upper(0, 0.0, obs, bound, tol);
        prop_assert_eq!(up.pass, obs <= bound + tol);
        prop_assert_eq!(up.margin, Some(bound + tol - obs));
        let low = CheckRecord::lower(0, 0.0, obs, bound, tol);
        prop_assert_eq!(low.pass, obs >= bound - tol);
        prop_assert_eq!(low.margin, Some(obs - (bound - tol)));
    }

    #[test]
    fn legendre_w_is_positive_with_det_g_lambda_over_h_eta(
        seed in 0u64..1000, a in -0.3f64..0.3, v in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let bg = pluri_bg(2.0, 2.0, a, 1, 1);
        let s = FlowState::new(smooth(seed, 0.03), 0.0, &bg, 0.5, None, DEFAULT_FLOOR).unwrap();
        let w = legendre_w(&s, &bg);
        let det = w.det();
        for i in 0..det.len() {
            let want = bg.g().data()[i] * s.lambda.data()[i] / (bg.h().data()[i] * s.eta.data()[i]);
            prop_assert!((det.data()[i] - want).abs() <= 1e-12 * want);
            prop_assert!(w.w11.data()[i] > 0.0 && det.data()[i] > 0.0);
        }
        let vv = [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])];
        if vv[0].norm() + vv[1].norm() > 1e-6 {
            prop_assert!(w.quadratic(vv).min() > 0.0);
        }
    }

    #[test]
    fn config_rejects_normalized_beta_above_one(beta in 0.05f64..2.0, alpha in 0.5f64..1.5) {
        let text = format!("[grid]\ndims = [8, 8, 8, 8]\n[flow]\nbeta = {beta}\nalpha = {alpha}\n");
        let ok = beta / alpha <= 1.0;
        match parse_config_str(&text) {
            Ok(_) => prop_assert!(ok),
            Err(e) => {
                prop_assert!(!ok);
                prop_assert_eq!(exit_code(&e), 2);
            }
        }
    }

    #[test]
    fn config_rejects_zero_strides(stride in 0usize..3) {
        let text = format!("[grid]\ndims = [8, 8, 8, 8]\n[flow]\nsnapshot_stride = {stride}\n");
        prop_assert_eq!(parse_config_str(&text).is_ok(), stride >= 1);
    }
}
