use serde::Serialize;

use super::{mixed_norm, CheckRecord, CheckSeries, MonitorContext};
use crate::error::{Error, Result};
use crate::flow::{speed, Trajectory};
use crate::geometry::{curvature, ConstantsReport};

/// `1e-8 (1 + scale)`: slack for monotone quantities.
fn monotone_slack(scale: f64) -> f64 {
    1e-8 * (1.0 + scale)
}

/// `max(1e-10, dt^2) (1 + scale)`: slack for pointwise comparisons.
fn pointwise_slack(dt: f64, scale: f64) -> f64 {
    1e-10f64.max(dt * dt) * (1.0 + scale)
}

/// Largest step size of the trajectory, used to size pointwise slacks.
fn max_dt(traj: &Trajectory) -> f64 {
    traj.snapshots.iter().map(|s| s.dt).fold(0.0, f64::max)
}

/// `du_dt == beta log lambda - log eta - f` at every snapshot.
pub fn check_speed(traj: &Trajectory, ctx: MonitorContext<'_>) -> CheckSeries {
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let st = &s.state;
            let expect = speed(&st.lambda, &st.eta, ctx.beta, ctx.forcing);
            let err = expect.sub(&st.du_dt).sup_norm();
            CheckRecord::upper(i, st.t, err, 0.0, 1e-13 * (1.0 + expect.sup_norm()))
        })
        .collect();
    CheckSeries::new("speed", records)
}

/// Monotonicity of `max du_dt` / `min du_dt`, and the pointwise comparison
/// `e^{min G} eta <= lambda^beta <= e^{max G} eta` with `G` the initial speed.
pub fn check_prop5(traj: &Trajectory, ctx: MonitorContext<'_>) -> (CheckSeries, CheckSeries) {
    let beta = ctx.beta;
    let g0 = &traj.initial().du_dt;
    let (g_min, g_max) = (g0.min(), g0.max());
    let g_scale = g0.sup_norm();
    let slack_pt = pointwise_slack(max_dt(traj), g_scale);
    let mut mono = Vec::new();
    let mut comp = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (i, s) in traj.snapshots.iter().enumerate() {
        let st = &s.state;
        let (mx, mn) = (st.du_dt.max(), st.du_dt.min());
        let slack = monotone_slack(st.du_dt.sup_norm());
        let (pmx, pmn) = prev.unwrap_or((mx, mn));
        let up = CheckRecord::upper(i, st.t, mx, pmx, slack);
        let down = CheckRecord::lower(i, st.t, mn, pmn, slack);
        mono.push(if up.slack() <= down.slack() { up } else { down });
        prev = Some((mx, mn));

        // margin of the two-sided pointwise comparison, in units of eta
        let mut worst = f64::INFINITY;
        let mut worst_obs = 0.0;
        let mut worst_bound = 0.0;
        for j in 0..st.u.len() {
            let f = ctx.forcing.map_or(0.0, |f| f.data()[j]);
            let lb = st.lambda.data()[j].powf(beta);
            let eta = st.eta.data()[j];
            let lo = (g_min + f).exp() * eta;
            let hi = (g_max + f).exp() * eta;
            let m = (lb - lo).min(hi - lb);
            if m < worst {
                worst = m;
                worst_obs = lb;
                worst_bound = if lb - lo < hi - lb { lo } else { hi };
            }
        }
        let tol = slack_pt * (1.0 + worst_obs);
        comp.push(CheckRecord {
            snapshot: i,
            t: st.t,
            bound: worst_bound,
            observed: worst_obs,
            tol,
            margin: Some(worst + tol),
            pass: worst + tol >= 0.0,
        });
    }
    (
        CheckSeries::new("prop5_monotone", mono),
        CheckSeries::new("prop5_comparability", comp),
    )
}

fn forced(ctx: &MonitorContext<'_>) -> bool {
    ctx.forcing.is_some_and(|f| f.sup_norm() > 0.0)
}

/// `min u0 <= u <= max u0` along the unforced flow.
pub fn check_prop6(traj: &Trajectory, ctx: MonitorContext<'_>) -> CheckSeries {
    if forced(&ctx) {
        return CheckSeries::skipped("prop6", "needs the reduced (unforced) problem");
    }
    let u0 = &traj.initial().u;
    let (lo, hi) = (u0.min(), u0.max());
    let tol = monotone_slack(u0.sup_norm());
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let u = &s.state.u;
            let up = CheckRecord::upper(i, s.state.t, u.max(), hi, tol);
            let down = CheckRecord::lower(i, s.state.t, u.min(), lo, tol);
            if up.slack() <= down.slack() {
                up
            } else {
                down
            }
        })
        .collect();
    CheckSeries::new("prop6", records)
}

/// Lower bound of `lambda`, maximized over `delta` in the given grid.
///
/// With `A = (1 + (1 + delta) C) / (beta - delta)` the bound is
/// `min((delta e^{-max G})^{1/(1-beta)}, A / (|min G| - (1 - beta))) e^{-A osc u0}`,
/// the second branch counting as infinite when `|min G| <= 1 - beta`.
pub fn prop7_bound(
    beta: f64,
    g_min: f64,
    g_max: f64,
    osc_u0: f64,
    c: f64,
    deltas: &[f64],
) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::Config("empty delta grid".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("lower bound needs beta in (0, 1), got {beta}")));
    }
    let mut best = f64::NEG_INFINITY;
    for &delta in deltas {
        if !(delta > 0.0 && delta < beta) {
            return Err(Error::Config(format!("delta = {delta} outside (0, beta)")));
        }
        let a = (1.0 + (1.0 + delta) * c) / (beta - delta);
        let first = (delta * (-g_max).exp()).powf(1.0 / (1.0 - beta));
        let second = if g_min.abs() > 1.0 - beta {
            a / (g_min.abs() - (1.0 - beta))
        } else {
            f64::INFINITY
        };
        let bound = first.min(second) * (-a * osc_u0).exp();
        best = best.max(bound);
    }
    Ok(best)
}

pub fn prop7_deltas(beta: f64) -> Vec<f64> {
    (1..=9).map(|k| k as f64 * 0.1 * beta).collect()
}

pub fn check_prop7(traj: &Trajectory, ctx: MonitorContext<'_>, consts: &ConstantsReport) -> CheckSeries {
    if forced(&ctx) {
        return CheckSeries::skipped("prop7", "needs the reduced (unforced) problem");
    }
    if ctx.beta >= 1.0 {
        return CheckSeries::skipped("prop7", "lower bound needs beta < 1");
    }
    let init = traj.initial();
    let osc = init.u.max() - init.u.min();
    let bound = match prop7_bound(
        ctx.beta,
        init.du_dt.min(),
        init.du_dt.max(),
        osc,
        consts.c,
        &prop7_deltas(ctx.beta),
    ) {
        Ok(b) => b,
        Err(e) => return CheckSeries::skipped("prop7", e.to_string()),
    };
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| CheckRecord::lower(i, s.state.t, s.state.lambda.min(), bound, 1e-10))
        .collect();
    CheckSeries::new("prop7", records)
}

/// `min lambda(t) >= min lambda(0)` when the background curvature has the
/// right sign.
pub fn check_cor8(traj: &Trajectory, ctx: MonitorContext<'_>) -> CheckSeries {
    if forced(&ctx) {
        return CheckSeries::skipped("cor8", "needs the reduced (unforced) problem");
    }
    if !curvature(ctx.bg).cor8_holds {
        return CheckSeries::skipped("cor8", "background curvature condition fails");
    }
    let init = traj.initial();
    let bound = init.lambda.min();
    let tol = pointwise_slack(max_dt(traj), init.lambda.max());
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| CheckRecord::lower(i, s.state.t, s.state.lambda.min(), bound, tol))
        .collect();
    CheckSeries::new("cor8", records)
}

#[derive(Debug, Clone, Serialize)]
pub struct C0Series {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub running_max: Vec<f64>,
}

/// `sup (1/lambda + 1/eta)` per snapshot and its running maximum.
pub fn c0_series(traj: &Trajectory) -> C0Series {
    let mut out = C0Series {
        t: Vec::new(),
        values: Vec::new(),
        running_max: Vec::new(),
    };
    let mut run = f64::NEG_INFINITY;
    for s in &traj.snapshots {
        let v = s.state.lambda.zip_map(&s.state.eta, |l, e| 1.0 / l + 1.0 / e).max();
        run = run.max(v);
        out.t.push(s.state.t);
        out.values.push(v);
        out.running_max.push(run);
    }
    out
}

/// `sup |nu|^2 <= max(1 + C0 A, (sup_0 |nu|^2 + C0 A) e^{C11 t})`.
pub fn check_prop10(traj: &Trajectory, ctx: MonitorContext<'_>, consts: &ConstantsReport) -> CheckSeries {
    let sup0 = mixed_norm(traj.initial(), ctx.bg, ctx.beta).max();
    let ca = consts.c0 * consts.a_prop9;
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = s.state.t - traj.initial().t;
            let bound = (1.0 + ca).max((sup0 + ca) * (consts.c11 * t).exp());
            let obs = mixed_norm(&s.state, ctx.bg, ctx.beta).max();
            CheckRecord::upper(i, s.state.t, obs, bound, 1e-8 * (1.0 + bound.min(1e300)))
        })
        .collect();
    CheckSeries::new("prop10", records)
}

/// `max lambda(t) <= max lambda(0) exp((B sup_0 |nu|^2 + B C7 C0 / beta) e^{C14 t})`.
pub fn check_prop12(traj: &Trajectory, ctx: MonitorContext<'_>, consts: &ConstantsReport) -> CheckSeries {
    let p = match consts.prop11() {
        Ok(p) => *p,
        Err(e) => return CheckSeries::skipped("prop12", e.to_string()),
    };
    if forced(&ctx) {
        return CheckSeries::skipped("prop12", "needs the reduced (unforced) problem");
    }
    let init = traj.initial();
    let sup0 = mixed_norm(init, ctx.bg, ctx.beta).max();
    let lam0 = init.lambda.max();
    let rate = p.b * sup0 + p.b * consts.c7 * consts.c0 / ctx.beta;
    let records = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = s.state.t - init.t;
            let bound = lam0 * (rate * (p.c14 * t).exp()).exp();
            let bound = if bound.is_nan() { f64::INFINITY } else { bound };
            let tol = 1e-8 * (1.0 + bound.min(1e300));
            CheckRecord::upper(i, s.state.t, s.state.lambda.max(), bound, tol)
        })
        .collect();
    CheckSeries::new("prop12", records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn prop7_bound_zero_data() {
        let b = prop7_bound(0.5, 0.0, 0.0, 0.0, 0.0, &[0.25]).unwrap();
        assert_abs_diff_eq!(b, 0.0625, epsilon = 1e-15);
        assert!(prop7_bound(0.5, 0.0, 0.0, 0.0, 0.0, &[]).is_err());
    }

    #[test]
    fn prop7_bound_degenerates_as_beta_tends_to_one() {
        let b1 = prop7_bound(0.9, 0.0, 0.0, 0.0, 0.0, &[0.45]).unwrap();
        let b2 = prop7_bound(0.99, 0.0, 0.0, 0.0, 0.0, &[0.495]).unwrap();
        assert!(b2 < b1 && b2 < 1e-30);
    }

    #[test]
    fn prop7_second_branch_rule() {
        // |min G| < 1 - beta: only the first branch counts
        let beta = 0.5;
        let a = (1.0 + 1.25 * 0.1) / (beta - 0.25);
        let b = prop7_bound(beta, -0.3, 0.2, 0.1, 0.1, &[0.25]).unwrap();
        let expect = (0.25 * (-0.2f64).exp()).powf(2.0) * (-a * 0.1f64).exp();
        assert_abs_diff_eq!(b, expect, epsilon = 1e-15);
        // |min G| > 1 - beta with a tiny second branch
        let b = prop7_bound(beta, -100.0, 0.0, 0.0, 0.0, &[0.25]).unwrap();
        assert_abs_diff_eq!(b, 4.0 / (100.0 - 0.5), epsilon = 1e-15);
    }
}
