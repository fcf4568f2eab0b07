//! Deliberately corrupted trajectories, one per check. Every check must
//! fail on its own fixture.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowState, Trajectory};
use crate::grid::RealField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Speed,
    Prop5Monotone,
    Prop5Comparability,
    Prop6,
    Prop7,
    Cor8,
    Prop10,
    Prop12,
    Lemma24,
    Lemma24Det,
    PhiArgmax,
    PhiPointwise,
    PhiGrowth,
}

impl Corruption {
    pub const ALL: [Corruption; 13] = [
        Corruption::Speed,
        Corruption::Prop5Monotone,
        Corruption::Prop5Comparability,
        Corruption::Prop6,
        Corruption::Prop7,
        Corruption::Cor8,
        Corruption::Prop10,
        Corruption::Prop12,
        Corruption::Lemma24,
        Corruption::Lemma24Det,
        Corruption::PhiArgmax,
        Corruption::PhiPointwise,
        Corruption::PhiGrowth,
    ];

    /// Name of the check this fixture targets.
    pub fn check(self) -> &'static str {
        match self {
            Corruption::Speed => "speed",
            Corruption::Prop5Monotone => "prop5_monotone",
            Corruption::Prop5Comparability => "prop5_comparability",
            Corruption::Prop6 => "prop6",
            Corruption::Prop7 => "prop7",
            Corruption::Cor8 => "cor8",
            Corruption::Prop10 => "prop10",
            Corruption::Prop12 => "prop12",
            Corruption::Lemma24 => "lemma24",
            Corruption::Lemma24Det => "lemma24_det",
            Corruption::PhiArgmax => "phi_argmax",
            Corruption::PhiPointwise => "phi_pointwise",
            Corruption::PhiGrowth => "phi_growth",
        }
    }

    pub fn from_check(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.check() == name)
    }
}

fn st(out: &mut Trajectory, k: usize) -> &mut FlowState {
    Arc::make_mut(&mut out.snapshots[k].state)
}

fn edit(field: &mut RealField, f: impl FnOnce(&mut [f64])) {
    f(field.data_mut());
}

/// Returns a copy of `traj` with the defect that `which` must detect.
///
/// Fixtures that act on time differences need a snapshot with both
/// neighbours recorded; the others need at least two snapshots.
pub fn corrupt(traj: &Trajectory, which: Corruption) -> Result<Trajectory> {
    let mut out = traj.clone();
    let n = out.snapshots.len();
    if n < 2 {
        return Err(Error::Config("corruption fixtures need two or more snapshots".into()));
    }
    let last = n - 1;
    let early = 1;
    let triplet = out
        .snapshots
        .iter()
        .position(|s| s.triplet().is_some())
        .ok_or_else(|| Error::Config("corruption fixture needs recorded time neighbours".into()));
    let init = traj.initial().clone();
    match which {
        Corruption::Speed => edit(&mut st(&mut out, last).du_dt, |d| d[0] += 1.0),
        Corruption::Prop5Monotone => {
            let s = st(&mut out, last);
            let bump = 0.1 * (1.0 + init.du_dt.sup_norm());
            let top = init.du_dt.max();
            edit(&mut s.du_dt, |d| d[0] = top + bump);
        }
        Corruption::Prop5Comparability => {
            let s = st(&mut out, last);
            let g_max = init.du_dt.max();
            let eta0 = s.eta.data()[0];
            let beta = traj.params.beta;
            edit(&mut s.lambda, |l| l[0] = ((g_max + 1.0).exp() * eta0).powf(1.0 / beta));
        }
        Corruption::Prop6 => {
            let top = init.u.max();
            edit(&mut st(&mut out, last).u, |u| u[0] = top + 1.0);
        }
        Corruption::Prop7 => edit(&mut st(&mut out, last).lambda, |l| l[0] = -1.0),
        Corruption::Cor8 => {
            let floor = init.lambda.min();
            edit(&mut st(&mut out, last).lambda, |l| l[0] = floor - 0.1);
        }
        Corruption::Prop10 => {
            let s = st(&mut out, early);
            let grid = *s.u.grid();
            let [l1, _, l3, _] = grid.periods();
            let bump = RealField::from_fn(grid, |x| {
                1e3 * (2.0 * PI * x[0] / l1).sin() * (2.0 * PI * x[2] / l3).sin()
            });
            s.u = s.u.add(&bump);
        }
        Corruption::Prop12 => {
            let top = init.lambda.max();
            edit(&mut st(&mut out, early).lambda, |l| l[0] = 1e12 * top);
        }
        Corruption::Lemma24 => {
            let k = triplet?;
            let next = out.snapshots[k].next.as_mut().expect("triplet");
            let s = Arc::make_mut(next);
            s.eta = s.eta.scale(0.5);
        }
        Corruption::Lemma24Det => {
            let s = st(&mut out, last);
            s.lambda = s.lambda.scale(1.01);
        }
        Corruption::PhiArgmax => {
            let k = triplet?;
            let next = out.snapshots[k].next.as_mut().expect("triplet");
            let s = Arc::make_mut(next);
            s.lambda = s.lambda.scale(std::f64::consts::E);
        }
        Corruption::PhiPointwise => {
            let k = triplet?;
            let mid = out.snapshots[k].state.lambda.clone();
            let j = mid.data().iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(j, _)| j).unwrap_or(0);
            let next = out.snapshots[k].next.as_mut().expect("triplet");
            let s = Arc::make_mut(next);
            edit(&mut s.lambda, |l| l[j] *= 10.0);
        }
        Corruption::PhiGrowth => edit(&mut st(&mut out, early).lambda, |l| l[0] = 1e300),
    }
    Ok(out)
}
