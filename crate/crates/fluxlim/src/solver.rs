//! Explicit time integration of the flux-limited equation.
//!
//! Forward Euler only: flux-limited velocities keep the stable step at
//! `O(dx)` in the hyperbolic regime and `O(dx^2)` in the diffusive one, runs
//! are desk-scale, and the plain monotone update is what makes the
//! order-preservation (comparison) experiments clean. [`stable_dt`] bounds
//! the step by both regimes using the actual interface slopes, so fronts
//! with collapsed diffusion coefficients are advanced at the advective limit
//! rather than a uselessly small parabolic one.
//!
//! Each step is clipped to land exactly on the next snapshot time. After a
//! step, cells are clamped to a positivity floor so the logarithms in the
//! flux stay finite; every picogram of mass injected this way is accounted
//! in the trajectory rather than silently discarded.

use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::numeric::neumaier_sum;
use crate::operators::{BoundaryCondition, FluxMode, OperatorContext};
use crate::potential::free_energy;

/// Smallest stable step before the run is abandoned as stiffness collapse.
pub const MIN_DT: f64 = 1e-15;

/// Default post-step positivity floor (density units).
pub const STEP_FLOOR: f64 = 1e-12;

/// A full integration request: operator context plus time-stepping policy.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ctx: OperatorContext,
    pub t_end: f64,
    pub cfl_factor: f64,
    pub snapshot_times: Vec<f64>,
    pub positivity_floor: f64,
}

impl RunConfig {
    /// Validating constructor with defaults: CFL factor 0.4, floor 1e-12,
    /// no intermediate snapshots.
    pub fn new(ctx: OperatorContext, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Config(format!(
                "t_end must be positive and finite, got {t_end}"
            )));
        }
        Ok(Self {
            ctx,
            t_end,
            cfl_factor: 0.4,
            snapshot_times: Vec::new(),
            positivity_floor: STEP_FLOOR,
        })
    }

    /// Sets the CFL safety factor; must lie in `(0, 1]`.
    pub fn with_cfl_factor(mut self, cfl: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_factor must lie in (0, 1], got {cfl}"
            )));
        }
        self.cfl_factor = cfl;
        Ok(self)
    }

    /// Sets intermediate snapshot times; must be sorted, distinct, and
    /// within `[0, t_end]`.
    pub fn with_snapshots(mut self, times: Vec<f64>) -> Result<Self> {
        for pair in times.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::Config(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
        }
        if times.iter().any(|&t| t < 0.0 || t > self.t_end) {
            return Err(Error::Config(format!(
                "snapshot times must lie in [0, {}]",
                self.t_end
            )));
        }
        self.snapshot_times = times;
        Ok(self)
    }

    /// Sets the post-step positivity floor; must be positive.
    pub fn with_positivity_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::Config(format!(
                "positivity floor must be positive and finite, got {floor}"
            )));
        }
        self.positivity_floor = floor;
        Ok(self)
    }
}

/// One accepted time step.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord {
    /// Time after the step.
    pub t: f64,
    pub dt: f64,
    /// Mass after the step (post-floor).
    pub mass: f64,
    pub min: f64,
    pub max: f64,
    /// The integrator's own free-energy functional at the new state.
    pub free_energy: f64,
    /// Inner iterations spent on the step: zero for the explicit
    /// finite-volume integrator, the Newton count for the variational one.
    pub newton_iters: usize,
}

/// The result of a run, shared by both integrators: snapshots, a per-step
/// log, and the bookkeeping totals the conservation checks read.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `(t, state)` pairs; always includes `t = 0` and the final time.
    pub snapshots: Vec<(f64, DensityField)>,
    pub steps: Vec<StepRecord>,
    /// Total mass added by positivity flooring over the whole run.
    pub flooring_injected: f64,
    /// Largest per-step relative mass drift measured before flooring.
    pub max_rel_mass_drift: f64,
    /// Newton iterations summed over steps (variational integrator only).
    pub total_newton_iters: usize,
    /// Non-fatal observations (renormalized input, local-minimum warnings).
    pub caveats: Vec<String>,
}

impl Trajectory {
    /// The final `(t, state)` pair.
    pub fn last(&self) -> &(f64, DensityField) {
        self.snapshots.last().expect("trajectory has snapshots")
    }
}

/// Largest stable forward-Euler step for the current state: the CFL factor
/// times the harsher of the advective bound `dx / v_max` and the diffusive
/// bound `dx^2 / (2 lambda_max)`, with velocities and curvatures sampled at
/// the actual interface slopes.
pub fn stable_dt(ctx: &OperatorContext, u: &DensityField, cfl_factor: f64) -> f64 {
    let grid = ctx.grid();
    let dx = grid.dx();
    let cost = ctx.cost();
    let dv = ctx.interface_force_slopes();
    let slopes = ctx.interface_log_slopes(u);
    let mut v_max: f64 = 0.0;
    let mut lambda_max: f64 = 0.0;
    for i in 0..=grid.n_cells {
        // Closed interfaces carry no flux, hence no stability constraint.
        if matches!(ctx.boundary(), BoundaryCondition::NoFlux) && (i == 0 || i == grid.n_cells) {
            continue;
        }
        match ctx.flux_mode() {
            FluxMode::SeparateArgument => {
                let v = cost.dual_grad_1d(dv[i]) + cost.dual_grad_1d(slopes[i]);
                v_max = v_max.max(v.abs());
                // Only the log-density slope couples back to u; the force
                // term is pure advection and is covered by the velocity
                // bound, so its curvature sets no diffusive scale.
                lambda_max = lambda_max.max(cost.dual_hess_1d(slopes[i]));
            }
            FluxMode::CombinedArgument => {
                let p = dv[i] + slopes[i];
                v_max = v_max.max(cost.dual_grad_1d(p).abs());
                lambda_max = lambda_max.max(cost.dual_hess_1d(p));
            }
        }
    }
    let dt_hyp = if v_max > 0.0 { dx / v_max } else { f64::INFINITY };
    let dt_par = if lambda_max > 0.0 {
        dx * dx / (2.0 * lambda_max)
    } else {
        f64::INFINITY
    };
    cfl_factor * dt_hyp.min(dt_par)
}

/// Integrates `d/dt u = L u` from `u0` to `t_end` with stability-controlled
/// forward-Euler steps.
///
/// The initial state is floored to the configured positivity level (the
/// injected mass is logged), snapshots are taken exactly at the requested
/// times plus `t = 0` and `t_end`, and the run aborts with a blow-up error
/// (carrying the last good state) if the field leaves the finite range, or
/// with a stiffness error if the stable step underflows [`MIN_DT`].
pub fn run(config: &RunConfig, u0: &DensityField) -> Result<Trajectory> {
    let grid = config.ctx.grid();
    if u0.grid != *grid {
        return Err(Error::MismatchedGrids);
    }
    if u0.mass() <= 0.0 {
        return Err(Error::EmptyDensity);
    }
    let dx = grid.dx();
    let mut caveats = Vec::new();

    // Floor the initial state so logarithms are well defined from step one.
    let mut u = u0.clone();
    let mut injected = 0.0;
    for v in u.values_mut() {
        if *v < config.positivity_floor {
            injected += (config.positivity_floor - *v) * dx;
            *v = config.positivity_floor;
        }
    }
    if injected > 0.0 {
        caveats.push(format!(
            "initial state floored at {:e}; injected mass {:.3e}",
            config.positivity_floor, injected
        ));
    }

    let mut targets: Vec<f64> = config
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < config.t_end)
        .collect();
    targets.push(config.t_end);

    let mut snapshots = vec![(0.0, u.clone())];
    let mut steps = Vec::new();
    let mut max_rel_mass_drift: f64 = 0.0;
    let mut t = 0.0;
    let mut mass = u.mass();

    for target in targets {
        while t < target {
            let dt_stable = stable_dt(&config.ctx, &u, config.cfl_factor);
            if dt_stable < MIN_DT {
                return Err(Error::StiffnessCollapse { t, dt: dt_stable });
            }
            let remaining = target - t;
            let clipped = dt_stable >= remaining;
            let dt = if clipped { remaining } else { dt_stable };
            let l = config.ctx.apply_l(&u)?;

            let vals = u.values_mut();
            for (v, li) in vals.iter_mut().zip(&l) {
                *v += dt * li;
            }
            if vals.iter().any(|v| !v.is_finite()) {
                let (_, last_good) = snapshots.last().expect("initial snapshot exists");
                return Err(Error::BlowUp {
                    t: t + dt,
                    last_good: Box::new(last_good.clone()),
                });
            }
            let mass_pre_floor = dx * neumaier_sum(vals.iter().copied());
            max_rel_mass_drift =
                max_rel_mass_drift.max(((mass_pre_floor - mass) / mass).abs());
            for v in vals.iter_mut() {
                if *v < config.positivity_floor {
                    injected += (config.positivity_floor - *v) * dx;
                    *v = config.positivity_floor;
                }
            }
            t = if clipped { target } else { t + dt };
            mass = u.mass();
            let (min, max) = u
                .values()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            steps.push(StepRecord {
                t,
                dt,
                mass,
                min,
                max,
                free_energy: free_energy(&u, config.ctx.potential()),
                newton_iters: 0,
            });
        }
        snapshots.push((target, u.clone()));
    }

    Ok(Trajectory {
        snapshots,
        steps,
        flooring_injected: injected,
        max_rel_mass_drift,
        total_newton_iters: 0,
        caveats,
    })
}

/// Convenience constructor used by tests and examples: a no-flux context on
/// `grid` with the given cost and potential.
pub fn no_flux_context(
    cost: crate::cost::CostFunction,
    potential: crate::potential::Potential,
    grid: crate::geometry::Grid1D,
) -> OperatorContext {
    OperatorContext::new(cost, potential, grid, BoundaryCondition::NoFlux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFunction;
    use crate::geometry::Grid1D;
    use crate::potential::{gibbs_density, Potential};

    fn gaussian(center: f64, width: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| (-(x - center) * (x - center) / (2.0 * width * width)).exp()
    }

    #[test]
    fn stable_dt_is_parabolic_for_near_constant_states() {
        let grid = Grid1D::new(0.0, 1.0, 100).unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        let u = DensityField::from_fn(grid, |x| 1.0 + 1e-9 * x.sin()).unwrap();
        let dt = stable_dt(&ctx, &u, 0.4);
        let dx = grid.dx();
        assert!(
            (dt - 0.4 * dx * dx / 2.0).abs() < 1e-3 * dt,
            "dt = {dt}, expected about {}",
            0.4 * dx * dx / 2.0
        );
    }

    #[test]
    fn stable_dt_is_advective_on_steep_fronts() {
        // Log-linear profile with slope 50: the diffusion coefficient
        // collapses to (1 + 2500)^{-3/2} and the advective bound dominates.
        let grid = Grid1D::new(-1.0, 1.0, 20).unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        let u = DensityField::from_fn(grid, |x| (-50.0 * x).exp()).unwrap();
        let dt = stable_dt(&ctx, &u, 0.4);
        let v = 50.0f64 / (1.0 + 2500.0f64).sqrt();
        let expected = 0.4 * grid.dx() / v;
        assert!(
            (dt - expected).abs() < 1e-6 * expected,
            "dt = {dt}, expected {expected}"
        );
    }

    #[test]
    fn stable_dt_for_classical_cost_is_half_dx_squared() {
        let grid = Grid1D::new(0.0, 1.0, 50).unwrap();
        let ctx = no_flux_context(CostFunction::classical_quadratic(), Potential::Zero, grid);
        let u = DensityField::from_fn(grid, |x| 1.0 + 0.1 * (3.0 * x).sin()).unwrap();
        let dt = stable_dt(&ctx, &u, 1.0);
        let dx = grid.dx();
        // lambda = 1 exactly; the velocity bound is far from binding here.
        assert!((dt - dx * dx / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gibbs_state_is_a_fixed_point_of_the_run() {
        let grid = Grid1D::new(-6.0, 6.0, 200).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let u0 = gibbs_density(&v, &grid).unwrap();
        let ctx = no_flux_context(CostFunction::relativistic(1.0).unwrap(), v, grid);
        let config = RunConfig::new(ctx, 1.0).unwrap();
        let traj = run(&config, &u0).unwrap();
        let (_, u_final) = traj.last();
        assert!(u_final.l1_distance(&u0).unwrap() <= 1e-6);
    }

    #[test]
    fn mass_is_conserved_and_flooring_stays_tiny() {
        let grid = Grid1D::new(-4.0, 4.0, 200).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let u0 = DensityField::from_fn(grid, gaussian(0.5, 0.7))
            .unwrap()
            .normalized()
            .unwrap();
        let ctx = no_flux_context(CostFunction::relativistic(1.0).unwrap(), v, grid);
        let config = RunConfig::new(ctx, 0.5).unwrap();
        let traj = run(&config, &u0).unwrap();
        assert!(traj.max_rel_mass_drift <= 1e-12, "{}", traj.max_rel_mass_drift);
        assert!(traj.flooring_injected <= 1e-10, "{}", traj.flooring_injected);
        let (_, u_final) = traj.last();
        assert!((u_final.mass() - 1.0).abs() < 1e-9);
        // Positivity held throughout.
        assert!(traj.steps.iter().all(|s| s.min >= STEP_FLOOR));
    }

    #[test]
    fn snapshots_land_exactly_on_requested_times() {
        let grid = Grid1D::new(-2.0, 2.0, 60).unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        let u0 = DensityField::from_fn(grid, gaussian(0.0, 0.5))
            .unwrap()
            .normalized()
            .unwrap();
        let config = RunConfig::new(ctx, 0.5)
            .unwrap()
            .with_snapshots(vec![0.1, 0.25])
            .unwrap();
        let traj = run(&config, &u0).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|(t, _)| *t).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.25, 0.5]);
        // Step times are consistent: last step ends exactly at t_end.
        assert_eq!(traj.steps.last().unwrap().t, 0.5);
    }

    #[test]
    fn free_energy_is_nonincreasing_along_the_run() {
        let grid = Grid1D::new(-4.0, 4.0, 150).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let u0 = DensityField::from_fn(grid, gaussian(0.8, 0.6))
            .unwrap()
            .normalized()
            .unwrap();
        let ctx = no_flux_context(CostFunction::relativistic(1.0).unwrap(), v.clone(), grid);
        let config = RunConfig::new(ctx, 0.5).unwrap();
        let traj = run(&config, &u0).unwrap();
        let mut prev = crate::potential::free_energy(&traj.snapshots[0].1, &v);
        for s in &traj.steps {
            assert!(
                s.free_energy - prev <= 1e-8 * s.dt,
                "free energy rose by {} at t = {}",
                s.free_energy - prev,
                s.t
            );
            prev = s.free_energy;
        }
        // And it actually dissipates.
        assert!(traj.steps.last().unwrap().free_energy < traj.steps[0].free_energy);
    }

    #[test]
    fn finite_propagation_from_mollified_indicator() {
        let grid = Grid1D::new(-4.0, 4.0, 800).unwrap();
        let dx = grid.dx();
        // Indicator of [-0.5, 0.5] with a two-cell ramp just inside the
        // support, so the initial support radius is exactly 0.5.
        let ramp = move |x: f64| ((0.5 - x.abs()) / (2.0 * dx)).clamp(0.0, 1.0);
        let u0 = DensityField::from_fn(grid, ramp).unwrap().normalized().unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        let config = RunConfig::new(ctx, 1.0).unwrap();
        let traj = run(&config, &u0).unwrap();
        let (_, u_final) = traj.last();
        let mass_beyond = |r: f64| -> f64 {
            dx * u_final
                .values()
                .iter()
                .zip(grid.cell_centers())
                .filter(|(_, x)| x.abs() > r)
                .map(|(&v, _)| v)
                .sum::<f64>()
        };
        let radius = grid
            .cell_centers()
            .zip(u_final.values())
            .filter(|(_, &v)| v > 1e-10)
            .map(|(x, _)| x.abs())
            .fold(0.0f64, f64::max);
        // The discrete flux limitation is exact: every interface velocity
        // stays strictly below the maximum speed throughout the run.
        let (_, velocities) = config.ctx.interface_fluxes(u_final).unwrap();
        let vmax = velocities.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(vmax < 1.0, "interface speed {vmax} reached the bound");
        // The front itself travels at the maximum speed and carries an O(1)
        // jump, which a first-order donor-cell flux smears over a width of
        // roughly sqrt(speed * t * dx) ~ 0.1.  The smeared tail therefore
        // spills a first-order amount of mass past the exact light cone but
        // is exhausted well before one smearing width further out.
        assert!(
            mass_beyond(1.5 + 5.0 * dx) < 5e-2,
            "front smearing grew beyond the first-order estimate: {:e}",
            mass_beyond(1.5 + 5.0 * dx)
        );
        assert!(
            mass_beyond(2.2) < 1e-8,
            "mass far outside the light cone: {:e} (support radius {radius})",
            mass_beyond(2.2)
        );
    }

    #[test]
    fn classical_run_relaxes_to_gibbs() {
        let grid = Grid1D::new(-6.0, 6.0, 200).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let u0 = DensityField::from_fn(grid, gaussian(0.1, 1.0))
            .unwrap()
            .normalized()
            .unwrap();
        let ctx = no_flux_context(CostFunction::classical_quadratic(), v.clone(), grid);
        let config = RunConfig::new(ctx, 5.0).unwrap();
        let traj = run(&config, &u0).unwrap();
        let gibbs = gibbs_density(&v, &grid).unwrap();
        let dist = traj.last().1.l1_distance(&gibbs).unwrap();
        assert!(dist <= 1e-3, "L1 distance to equilibrium: {dist}");
    }

    #[test]
    fn ordered_initial_states_stay_ordered() {
        let grid = Grid1D::new(-3.0, 3.0, 120).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let lower = DensityField::from_fn(grid, |x| gaussian(0.0, 0.8)(x) + 0.2).unwrap();
        let upper = DensityField::from_fn(grid, |x| gaussian(0.0, 0.8)(x) + 0.3).unwrap();
        let make_config = || {
            let ctx = no_flux_context(
                CostFunction::relativistic(1.0).unwrap(),
                v.clone(),
                grid,
            );
            RunConfig::new(ctx, 0.3)
                .unwrap()
                .with_snapshots(vec![0.1, 0.2])
                .unwrap()
        };
        let t_lower = run(&make_config(), &lower).unwrap();
        let t_upper = run(&make_config(), &upper).unwrap();
        for ((t, ul), (_, uu)) in t_lower.snapshots.iter().zip(&t_upper.snapshots) {
            let worst = ul
                .values()
                .iter()
                .zip(uu.values())
                .map(|(a, b)| b - a)
                .fold(f64::INFINITY, f64::min);
            assert!(worst >= -1e-8, "ordering violated by {worst} at t = {t}");
        }
    }

    #[test]
    fn blow_up_reports_last_good_state() {
        // An absurd ghost density floods the first cell with an infinite
        // flux divergence on the very first step.
        let grid = Grid1D::new(0.0, 1.0, 10).unwrap();
        let ctx = OperatorContext::new(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
            BoundaryCondition::Dirichlet {
                left: 1e308,
                right: 1.0,
            },
        );
        let u0 = DensityField::from_fn(grid, |_| 1.0).unwrap();
        let config = RunConfig::new(ctx, 1.0).unwrap();
        match run(&config, &u0) {
            Err(Error::BlowUp { t, last_good }) => {
                assert!(t > 0.0);
                assert_eq!(last_good.values(), u0.values());
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn sub_femtosecond_steps_abort_as_stiffness_collapse() {
        let grid = Grid1D::new(0.0, 1e-6, 20).unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        let u0 = DensityField::from_fn(grid, |_| 1.0).unwrap();
        let config = RunConfig::new(ctx, 1.0).unwrap();
        assert!(matches!(
            run(&config, &u0),
            Err(Error::StiffnessCollapse { .. })
        ));
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let grid = Grid1D::new(0.0, 1.0, 10).unwrap();
        let ctx = no_flux_context(
            CostFunction::relativistic(1.0).unwrap(),
            Potential::Zero,
            grid,
        );
        assert!(RunConfig::new(ctx.clone(), 0.0).is_err());
        let base = RunConfig::new(ctx.clone(), 1.0).unwrap();
        assert!(base.clone().with_cfl_factor(0.0).is_err());
        assert!(base.clone().with_cfl_factor(1.5).is_err());
        assert!(base.clone().with_snapshots(vec![0.3, 0.2]).is_err());
        assert!(base.clone().with_snapshots(vec![0.5, 2.0]).is_err());
        assert!(base.with_positivity_floor(0.0).is_err());
    }
}
