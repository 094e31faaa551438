//! Structural checks on completed runs.
//!
//! Each check measures one qualitative property the evolution is supposed to
//! have — ordering of solutions, extremum localization, stationarity of the
//! Gibbs state, propagation cones, the large-`c` classical limit, long-run
//! equilibrium convergence — and returns a [`PrincipleReport`] with the
//! measured margin, the tolerance it was held to, and a verdict.
//!
//! Margins are oriented uniformly: **Pass if and only if
//! `margin >= -tolerance`**, and larger margins mean more room to spare. For
//! residual- and distance-type checks the margin is the negated residual or
//! distance, so the tolerance reads directly as the acceptance bound.
//!
//! A check never silently tests a conclusion whose hypothesis fails: when a
//! sign condition, positivity requirement, initial ordering, or bounded-cost
//! requirement is violated, the verdict is [`Verdict::HypothesisNotMet`]
//! rather than Pass or Fail.
//!
//! Every check is a pure function of its inputs; reruns agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::operators::OperatorContext;
use crate::potential::{
    classify_sign, force_flux_divergence, gibbs_density, Potential, SignClass,
    SIGN_TOL,
};
use crate::solver::{no_flux_context, run, RunConfig, Trajectory};

/// Outcome of one structural check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Hypotheses hold and the measured margin is at least `-tolerance`.
    Pass,
    /// Hypotheses hold but the margin falls short.
    Fail,
    /// A stated hypothesis of the principle is violated by the inputs; the
    /// conclusion was not tested.
    HypothesisNotMet,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "Pass"),
            Verdict::Fail => write!(f, "Fail"),
            Verdict::HypothesisNotMet => write!(f, "HypothesisNotMet"),
        }
    }
}

/// Report of one structural check: what was checked, which hypotheses were
/// examined, the measured margin, and the verdict.
///
/// Invariant: `verdict == Pass` iff the hypotheses held and
/// `margin >= -tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrincipleReport {
    pub check: String,
    /// Human-readable `"condition: finding"` entries for each hypothesis
    /// examined, plus auxiliary observations.
    pub hypotheses: Vec<String>,
    pub margin: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl PrincipleReport {
    /// A report whose verdict follows from the margin: Pass iff
    /// `margin >= -tolerance`.
    pub fn from_measurement(
        check: &str,
        hypotheses: Vec<String>,
        margin: f64,
        tolerance: f64,
    ) -> Self {
        let verdict = if margin >= -tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            check: check.to_string(),
            hypotheses,
            margin,
            tolerance,
            verdict,
        }
    }

    /// A report for inputs that violate a hypothesis of the principle; the
    /// margin is `NaN` since the conclusion was never measured.
    pub fn hypothesis_not_met(
        check: &str,
        hypotheses: Vec<String>,
        tolerance: f64,
    ) -> Self {
        Self {
            check: check.to_string(),
            hypotheses,
            margin: f64::NAN,
            tolerance,
            verdict: Verdict::HypothesisNotMet,
        }
    }
}

/// Which extremum the localization check traces to the parabolic boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Maximum,
    Minimum,
}

/// Largest `|x|` over cells whose density exceeds `threshold`.
pub fn support_radius(u: &DensityField, threshold: f64) -> f64 {
    u.grid
        .cell_centers()
        .zip(u.values())
        .filter(|(_, &v)| v > threshold)
        .map(|(x, _)| x.abs())
        .fold(0.0f64, f64::max)
}

/// True when every cell of every snapshot is strictly positive.
fn strictly_positive(traj: &Trajectory) -> bool {
    traj.snapshots
        .iter()
        .all(|(_, u)| u.values().iter().all(|&v| v > 0.0))
}

/// Ordering preservation between two evolutions.
///
/// Requires the trajectories to share a grid and snapshot schedule, to be
/// strictly positive, and to start ordered (`u <= v` cellwise at `t = 0`);
/// violated requirements yield `HypothesisNotMet` (mismatched grids or
/// schedules are errors). The margin is the least value of `v - u` over all
/// snapshots and cells, so ordered evolutions score `margin >= 0` and the
/// check passes when ordering is violated by no more than `tol`.
pub fn check_comparison_evolutionary(
    traj_u: &Trajectory,
    traj_v: &Trajectory,
    tol: f64,
) -> Result<PrincipleReport> {
    const CHECK: &str = "comparison_evolutionary";
    let grid_u = traj_u.snapshots[0].1.grid;
    let grid_v = traj_v.snapshots[0].1.grid;
    if grid_u != grid_v {
        return Err(Error::MismatchedGrids);
    }
    if traj_u.snapshots.len() != traj_v.snapshots.len()
        || traj_u
            .snapshots
            .iter()
            .zip(&traj_v.snapshots)
            .any(|((ta, _), (tb, _))| ta != tb)
    {
        return Err(Error::Config(
            "comparison requires matching snapshot schedules".to_string(),
        ));
    }
    let mut hypotheses = Vec::new();
    let positive = strictly_positive(traj_u) && strictly_positive(traj_v);
    hypotheses.push(format!("both trajectories strictly positive: {positive}"));
    let ordered_at_start = traj_u.snapshots[0]
        .1
        .values()
        .iter()
        .zip(traj_v.snapshots[0].1.values())
        .all(|(&a, &b)| a <= b);
    hypotheses.push(format!("ordered at t = 0: {ordered_at_start}"));
    if !positive || !ordered_at_start {
        return Ok(PrincipleReport::hypothesis_not_met(
            CHECK, hypotheses, tol,
        ));
    }
    let mut margin = f64::INFINITY;
    for ((_, u), (_, v)) in traj_u.snapshots.iter().zip(&traj_v.snapshots) {
        for (&a, &b) in u.values().iter().zip(v.values()) {
            margin = margin.min(b - a);
        }
    }
    Ok(PrincipleReport::from_measurement(
        CHECK, hypotheses, margin, tol,
    ))
}

/// Extremum localization on the parabolic boundary.
///
/// The parabolic boundary is realized discretely as the initial snapshot
/// plus the two boundary cells at every snapshot time. Under the matching
/// sign condition on the force-flux divergence `D2phi*(V') * V''` —
/// non-positive for the maximum, non-negative for the minimum, with an
/// identically-zero divergence qualifying for both — the extremum over the
/// whole space-time cylinder must already be attained on that boundary.
///
/// Margin: `extremum over boundary - extremum over cylinder` for the
/// maximum (and the reflected difference for the minimum), which is `<= 0`
/// and equals 0 exactly when the extremum sits on the boundary.
pub fn check_weak_extremum_evolutionary(
    traj: &Trajectory,
    cost: &CostFunction,
    potential: &Potential,
    extremum: Extremum,
    tol: f64,
) -> PrincipleReport {
    let check = match extremum {
        Extremum::Maximum => "weak_maximum_evolutionary",
        Extremum::Minimum => "weak_minimum_evolutionary",
    };
    let grid = traj.snapshots[0].1.grid;
    let mut hypotheses = Vec::new();
    let class = classify_sign(potential, cost, &grid);
    hypotheses.push(format!("force-flux divergence sign: {class}"));
    // An identically-zero divergence satisfies both sign hypotheses.
    let zero_everywhere = grid.cell_centers().all(|x| {
        force_flux_divergence(potential, cost, x).abs() <= SIGN_TOL
    });
    let sign_ok = match extremum {
        Extremum::Maximum => {
            class == SignClass::NonPositive || zero_everywhere
        }
        Extremum::Minimum => {
            class == SignClass::NonNegative || zero_everywhere
        }
    };
    hypotheses.push(format!("sign hypothesis for the {check}: {sign_ok}"));
    let positive = strictly_positive(traj);
    hypotheses.push(format!("trajectory strictly positive: {positive}"));
    if !sign_ok || !positive {
        return PrincipleReport::hypothesis_not_met(check, hypotheses, tol);
    }
    let n = grid.n_cells;
    let mut boundary = match extremum {
        Extremum::Maximum => f64::NEG_INFINITY,
        Extremum::Minimum => f64::INFINITY,
    };
    let mut global = boundary;
    for (k, (_, u)) in traj.snapshots.iter().enumerate() {
        let values = u.values();
        for (i, &v) in values.iter().enumerate() {
            let on_boundary = k == 0 || i == 0 || i == n - 1;
            match extremum {
                Extremum::Maximum => {
                    global = global.max(v);
                    if on_boundary {
                        boundary = boundary.max(v);
                    }
                }
                Extremum::Minimum => {
                    global = global.min(v);
                    if on_boundary {
                        boundary = boundary.min(v);
                    }
                }
            }
        }
    }
    let margin = match extremum {
        Extremum::Maximum => boundary - global,
        Extremum::Minimum => global - boundary,
    };
    PrincipleReport::from_measurement(check, hypotheses, margin, tol)
}

/// Stationarity of a state under the flux operator.
///
/// Margin: the negated maximum absolute cell residual of the operator, so
/// the check passes when `max |Lu| <= tol`. The discrete Gibbs state makes
/// the interface velocities cancel identically, so its residual sits at the
/// rounding floor rather than at truncation order.
pub fn check_stationary(
    u: &DensityField,
    ctx: &OperatorContext,
    tol: f64,
) -> Result<PrincipleReport> {
    const CHECK: &str = "stationary_residual";
    let mut hypotheses = Vec::new();
    let positive = u.values().iter().all(|&v| v > 0.0);
    hypotheses.push(format!("state strictly positive: {positive}"));
    if !positive {
        return Ok(PrincipleReport::hypothesis_not_met(
            CHECK, hypotheses, tol,
        ));
    }
    let residual = ctx
        .apply_l(u)?
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    hypotheses.push(format!("max |Lu|: {residual:.3e}"));
    Ok(PrincipleReport::from_measurement(
        CHECK,
        hypotheses,
        -residual,
        tol,
    ))
}

/// Containment of the numerical support in the propagation cone.
///
/// Hypotheses: the run must have no force field (the cone statement is for
/// free spreading) and a bounded cost; a classical cost has no finite speed
/// and yields `HypothesisNotMet`. For each snapshot the support radius at
/// `threshold` is compared against
/// `initial radius + speed_bound * t + slack_cells * dx`; the margin is the
/// least slack over snapshots and the tolerance is zero, so any excursion
/// beyond the slack band fails.
pub fn check_propagation_speed(
    traj: &Trajectory,
    cost: &CostFunction,
    potential: &Potential,
    threshold: f64,
    slack_cells: usize,
) -> PrincipleReport {
    const CHECK: &str = "propagation_speed";
    let mut hypotheses = Vec::new();
    let free = matches!(potential, Potential::Zero);
    hypotheses.push(format!("no force field: {free}"));
    let speed = cost.speed_bound();
    hypotheses.push(format!("bounded cost: {}", speed.is_finite()));
    if !free || !speed.is_finite() {
        return PrincipleReport::hypothesis_not_met(CHECK, hypotheses, 0.0);
    }
    let grid = traj.snapshots[0].1.grid;
    let dx = grid.dx();
    let initial_radius = support_radius(&traj.snapshots[0].1, threshold);
    hypotheses.push(format!("initial support radius: {initial_radius:.6}"));
    let slack = slack_cells as f64 * dx;
    let mut margin = f64::INFINITY;
    for (t, u) in &traj.snapshots {
        let allowed = initial_radius + speed * t + slack;
        margin = margin.min(allowed - support_radius(u, threshold));
    }
    PrincipleReport::from_measurement(CHECK, hypotheses, margin, 0.0)
}

/// Agreement with the classical drift-diffusion limit at large speed.
///
/// Runs the same initial state and potential twice — once with the given
/// bounded cost, once with the classical quadratic cost — to the same time
/// on closed boundaries, and measures the final L1 distance. Margin: the
/// negated distance, so the check passes when the distance is at most
/// `tol`. The distance shrinks as the speed bound grows; at small speeds
/// the flux limitation slows transport visibly and the check fails.
pub fn check_classical_limit(
    cost: &CostFunction,
    potential: &Potential,
    u0: &DensityField,
    t: f64,
    tol: f64,
) -> Result<PrincipleReport> {
    const CHECK: &str = "classical_limit";
    let mut hypotheses = Vec::new();
    let bounded = cost.speed_bound().is_finite();
    hypotheses.push(format!("bounded cost: {bounded}"));
    if !bounded {
        return Ok(PrincipleReport::hypothesis_not_met(
            CHECK, hypotheses, tol,
        ));
    }
    hypotheses.push(format!("speed bound: {:.3e}", cost.speed_bound()));
    let grid = u0.grid;
    let limited = run(
        &RunConfig::new(
            no_flux_context(cost.clone(), potential.clone(), grid),
            t,
        )?,
        u0,
    )?;
    let classical = run(
        &RunConfig::new(
            no_flux_context(
                CostFunction::classical_quadratic(),
                potential.clone(),
                grid,
            ),
            t,
        )?,
        u0,
    )?;
    let distance = limited.last().1.l1_distance(&classical.last().1)?;
    Ok(PrincipleReport::from_measurement(
        CHECK,
        hypotheses,
        -distance,
        tol,
    ))
}

/// Long-run convergence to the Gibbs state.
///
/// Margin: the negated L1 distance between the final snapshot and the Gibbs
/// density of the potential, so the check passes when the final distance is
/// at most `tol`. The hypotheses record whether the potential confines the
/// grid (a non-confining potential leaks mass toward the boundary and the
/// Gibbs state may not attract) and whether the distance trace was
/// nonincreasing after the first tenth of the run — slow mixing between
/// metastable wells shows up there.
pub fn check_gibbs_convergence(
    traj: &Trajectory,
    potential: &Potential,
    tol: f64,
) -> Result<PrincipleReport> {
    const CHECK: &str = "gibbs_convergence";
    let grid = traj.snapshots[0].1.grid;
    let gibbs = gibbs_density(potential, &grid)?;
    let mut hypotheses = Vec::new();
    hypotheses.push(format!(
        "potential confines the grid: {}",
        potential.confines(&grid)
    ));
    let t_end = traj.snapshots.last().expect("trajectory has snapshots").0;
    let mut distances = Vec::with_capacity(traj.snapshots.len());
    for (t, u) in &traj.snapshots {
        distances.push((*t, u.l1_distance(&gibbs)?));
    }
    // Metastable dynamics stall; a transient can rise only early on.
    let settled: Vec<&(f64, f64)> = distances
        .iter()
        .filter(|(t, _)| *t >= 0.1 * t_end)
        .collect();
    let nonincreasing = settled
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-9);
    hypotheses.push(format!(
        "distance trace nonincreasing after 10% of the run: {nonincreasing}"
    ));
    let final_distance = distances.last().expect("at least one snapshot").1;
    Ok(PrincipleReport::from_measurement(
        CHECK,
        hypotheses,
        -final_distance,
        tol,
    ))
}
