//! Command-line driver: config-driven runs, check batteries, and
//! concurrent parameter sweeps.
//!
//! Subcommands:
//! - `solve <config>`: finite-volume run, then the configured checks;
//! - `jko <config>`: variational run, then the configured checks;
//! - `verify <config>`: checks only, integrating lazily when a check needs
//!   the trajectory;
//! - `sweep <config> key=v1,v2 ...`: cartesian sweep run concurrently, one
//!   subdirectory per point plus `sweep_summary.csv`. Points integrate
//!   lazily like `verify` unless the config lists no checks at all.
//!
//! Exit codes: 0 when every check passes (or none are configured); 1 for
//! config, file, or usage problems; 2 when a check fails; 3 when a
//! hypothesis gate trips under `--strict-hypotheses`; 4 for runtime
//! failures (blow-up, stiffness collapse, Newton failure).
//!
//! Check roster (see the config module for the file format):
//!
//! | name                  | measures                                   | default tolerance |
//! |-----------------------|--------------------------------------------|-------------------|
//! | `stationary`          | flux residual of the initial state         | 1e-3              |
//! | `comparison`          | ordering against a lifted twin run         | 1e-8              |
//! | `weak_maximum`        | max localization on the parabolic boundary | 1e-8              |
//! | `weak_minimum`        | min localization on the parabolic boundary | 1e-8              |
//! | `propagation`         | support cone containment                   | exact + slack     |
//! | `classical_limit`     | distance to the unbounded-speed run        | 1e-3              |
//! | `gibbs_convergence`   | final distance to the Gibbs state          | 1e-2              |
//! | `lq_identity`         | log-transform identity under refinement    | 1e-3              |
//! | `cost_properties`     | seeded audit of the cost's dual side       | 1e-6              |
//! | `fv_cross_validation` | variational vs finite-volume agreement     | 5e-2              |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{self, CheckSpec, Experiment, Integrator};
use crate::cost::{sample_audit, CostFunction};
use crate::diagnostics::{
    check_classical_limit, check_comparison_evolutionary,
    check_gibbs_convergence, check_propagation_speed, check_stationary,
    check_weak_extremum_evolutionary, Extremum, PrincipleReport, Verdict,
};
use crate::error::{Error, Result};
use crate::geometry::{DensityField, Grid1D};
use crate::jko::jko_run;
use crate::operators::{FluxMode, InterfaceDensity};
use crate::output::{self, RunMeta, SweepRow, TrajectorySummary};
use crate::solver::{run as run_fv, RunConfig, Trajectory};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;
pub const EXIT_HYPOTHESIS_NOT_MET: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "fluxlim",
    version,
    about = "Flux-limited diffusion laboratory: config-driven runs, \
             structural checks, and parameter sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write outputs here instead of the configured directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Treat HypothesisNotMet verdicts as failures (exit 3).
    #[arg(long, global = true)]
    strict_hypotheses: bool,
    /// Seed for checks that sample randomly (cost_properties).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the finite-volume integrator, then the configured checks.
    Solve { config: PathBuf },
    /// Run the variational integrator, then the configured checks.
    Jko { config: PathBuf },
    /// Run the configured checks, integrating only when one needs it.
    Verify { config: PathBuf },
    /// Cartesian parameter sweep over key=v1,v2,... overrides.
    Sweep {
        config: PathBuf,
        /// Overrides like `c=1,10,100`; keys: c, kappa, n_cells, t_end,
        /// cfl, h, n_steps, n_quantiles.
        #[arg(required = true)]
        overrides: Vec<String>,
    },
}

/// Entry point for the binary: parses `std::env::args` and runs.
pub fn run_from_env() -> u8 {
    match Cli::try_parse() {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

/// Testable entry point over explicit arguments (`args[0]` is the program
/// name, as usual).
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

#[derive(Debug, Clone)]
struct GlobalOpts {
    output_dir: Option<PathBuf>,
    strict: bool,
    seed: u64,
}

fn dispatch(cli: Cli) -> u8 {
    let opts = GlobalOpts {
        output_dir: cli.output_dir,
        strict: cli.strict_hypotheses,
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Solve { config } => {
            cmd_integrate(&config, Integrator::Fv, "solve", &opts)
        }
        Command::Jko { config } => {
            cmd_integrate(&config, Integrator::Jko, "jko", &opts)
        }
        Command::Verify { config } => cmd_verify(&config, &opts),
        Command::Sweep { config, overrides } => {
            cmd_sweep(&config, &overrides, &opts)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. }
        | Error::StiffnessCollapse { .. }
        | Error::NewtonFailure { .. } => EXIT_RUNTIME,
        _ => EXIT_CONFIG,
    }
}

fn cmd_integrate(
    path: &Path,
    want: Integrator,
    command: &str,
    opts: &GlobalOpts,
) -> Result<u8> {
    let exp = config::load(path)?;
    let got = exp.raw.experiment.integrator;
    if got != want {
        return Err(Error::Config(format!(
            "`{command}` requires integrator \"{want}\", but the config \
             sets \"{got}\""
        )));
    }
    let outcome = execute(&exp, command, opts, &[], true)?;
    print!("{}", outcome.log);
    Ok(outcome.code)
}

fn cmd_verify(path: &Path, opts: &GlobalOpts) -> Result<u8> {
    let exp = config::load(path)?;
    if exp.raw.checks.is_empty() {
        return Err(Error::Config(
            "nothing to verify: the config lists no checks".to_string(),
        ));
    }
    let outcome = execute(&exp, "verify", opts, &[], false)?;
    print!("{}", outcome.log);
    Ok(outcome.code)
}

struct ExecOutcome {
    code: u8,
    reports: Vec<PrincipleReport>,
    log: String,
}

/// Runs one experiment end to end: integrate (eagerly or on demand),
/// execute the checks, write the artifact directory, and render the
/// summary. Returns the log instead of printing so sweep points can be
/// emitted in deterministic order.
fn execute(
    exp: &Experiment,
    command: &str,
    opts: &GlobalOpts,
    overrides: &[(String, String)],
    always_run: bool,
) -> Result<ExecOutcome> {
    let out_dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| exp.output_dir());
    output::ensure_dir(&out_dir)?;
    let mut traj: Option<Trajectory> = None;
    if always_run {
        materialize(exp, &mut traj)?;
    }
    let mut reports = Vec::with_capacity(exp.raw.checks.len());
    for spec in &exp.raw.checks {
        reports.push(run_check(exp, spec, opts, &mut traj)?);
    }

    let mut snapshot_files = Vec::new();
    let mut caveats = Vec::new();
    if let Some(t) = &traj {
        snapshot_files = output::write_trajectory(&out_dir, t)?;
        caveats = t.caveats.clone();
    }
    output::write_plot_scripts(&out_dir, &snapshot_files, traj.is_some())?;
    output::write_reports(&out_dir, &reports)?;
    let mut meta = RunMeta::new(command);
    meta.name = exp.raw.experiment.name.clone();
    meta.integrator = Some(exp.raw.experiment.integrator.to_string());
    meta.seed = opts.seed;
    meta.strict_hypotheses = opts.strict;
    meta.overrides = overrides
        .iter()
        .map(|(k, v)| [k.clone(), v.clone()])
        .collect();
    meta.config = exp.config_text.clone();
    meta.caveats = caveats.clone();
    meta.summary = traj.as_ref().map(TrajectorySummary::from_trajectory);
    output::write_meta(&out_dir, &meta)?;

    let mut log = String::new();
    if let Some(summary) = &meta.summary {
        writeln!(
            log,
            "{}: {} steps to t = {}, final mass {:.12}",
            exp.raw.experiment.integrator,
            summary.n_steps,
            summary.final_time,
            summary.final_mass
        )
        .expect("string writes are infallible");
        if summary.total_newton_iters > 0 {
            writeln!(log, "newton iterations: {}", summary.total_newton_iters)
                .expect("string writes are infallible");
        }
    }
    for caveat in &caveats {
        writeln!(log, "caveat: {caveat}").expect("string writes are infallible");
    }
    if !reports.is_empty() {
        writeln!(
            log,
            "{:<26} {:>13} {:>10}  verdict",
            "check", "margin", "tolerance"
        )
        .expect("string writes are infallible");
        for r in &reports {
            writeln!(
                log,
                "{:<26} {:>13.4e} {:>10.1e}  {}",
                r.check, r.margin, r.tolerance, r.verdict
            )
            .expect("string writes are infallible");
            for note in &r.hypotheses {
                writeln!(log, "    {note}").expect("string writes are infallible");
            }
        }
    }
    writeln!(log, "wrote {}", out_dir.display())
        .expect("string writes are infallible");
    let code = verdict_code(&reports, opts.strict);
    Ok(ExecOutcome {
        code,
        reports,
        log,
    })
}

fn verdict_code(reports: &[PrincipleReport], strict: bool) -> u8 {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        return EXIT_CHECK_FAILED;
    }
    if strict
        && reports
            .iter()
            .any(|r| r.verdict == Verdict::HypothesisNotMet)
    {
        return EXIT_HYPOTHESIS_NOT_MET;
    }
    EXIT_OK
}

/// Runs the configured integrator once, caching the trajectory.
fn materialize<'a>(
    exp: &Experiment,
    slot: &'a mut Option<Trajectory>,
) -> Result<&'a Trajectory> {
    if slot.is_none() {
        *slot = Some(integrate(exp, &exp.initial)?);
    }
    Ok(slot.as_ref().expect("just filled"))
}

fn integrate(exp: &Experiment, u0: &DensityField) -> Result<Trajectory> {
    match exp.raw.experiment.integrator {
        Integrator::Fv => run_fv(&exp.run_config()?, u0),
        Integrator::Jko => {
            let section = exp.raw.jko.as_ref().expect("validated at load");
            jko_run(&exp.jko_config()?, u0, section.n_steps)
        }
    }
}

/// The comparison horizon when `classical_limit` has no explicit `t`.
fn default_horizon(exp: &Experiment) -> f64 {
    match exp.raw.experiment.integrator {
        Integrator::Fv => {
            exp.raw.run.as_ref().expect("validated at load").t_end
        }
        Integrator::Jko => {
            let jko = exp.raw.jko.as_ref().expect("validated at load");
            jko.h * jko.n_steps as f64
        }
    }
}

/// Rejects check parameters that do not belong to the named check, so a
/// config cannot carry silently ignored knobs.
fn validate_spec(spec: &CheckSpec) -> Result<()> {
    let name = spec.name.as_str();
    let reject = |field: &str| {
        Err(Error::Config(format!(
            "check `{name}` does not take `{field}`"
        )))
    };
    if spec.offset.is_some() && name != "comparison" {
        return reject("offset");
    }
    if (spec.threshold.is_some() || spec.slack_cells.is_some())
        && name != "propagation"
    {
        return reject("threshold/slack_cells");
    }
    if spec.t.is_some() && name != "classical_limit" {
        return reject("t");
    }
    if spec.samples.is_some() && name != "cost_properties" {
        return reject("samples");
    }
    if spec.tolerance.is_some() && name == "propagation" {
        return reject("tolerance (the cone bound is exact; use slack_cells)");
    }
    Ok(())
}

fn run_check(
    exp: &Experiment,
    spec: &CheckSpec,
    opts: &GlobalOpts,
    traj: &mut Option<Trajectory>,
) -> Result<PrincipleReport> {
    validate_spec(spec)?;
    let tol = spec.tolerance;
    match spec.name.as_str() {
        "stationary" => {
            check_stationary(&exp.initial, &exp.context(), tol.unwrap_or(1e-3))
        }
        "comparison" => {
            let offset = spec.offset.unwrap_or(0.1);
            if !(offset > 0.0) || !offset.is_finite() {
                return Err(Error::Config(format!(
                    "comparison offset must be positive, got {offset}"
                )));
            }
            let mut lifted = exp.initial.clone();
            for v in lifted.values_mut() {
                *v += offset;
            }
            let upper = integrate(exp, &lifted)?;
            let lower = materialize(exp, traj)?;
            check_comparison_evolutionary(lower, &upper, tol.unwrap_or(1e-8))
        }
        "weak_maximum" => Ok(check_weak_extremum_evolutionary(
            materialize(exp, traj)?,
            &exp.cost,
            &exp.potential,
            Extremum::Maximum,
            tol.unwrap_or(1e-8),
        )),
        "weak_minimum" => Ok(check_weak_extremum_evolutionary(
            materialize(exp, traj)?,
            &exp.cost,
            &exp.potential,
            Extremum::Minimum,
            tol.unwrap_or(1e-8),
        )),
        "propagation" => Ok(check_propagation_speed(
            materialize(exp, traj)?,
            &exp.cost,
            &exp.potential,
            spec.threshold.unwrap_or(1e-10),
            spec.slack_cells.unwrap_or(5),
        )),
        "classical_limit" => check_classical_limit(
            &exp.cost,
            &exp.potential,
            &exp.initial,
            spec.t.unwrap_or_else(|| default_horizon(exp)),
            tol.unwrap_or(1e-3),
        ),
        "gibbs_convergence" => check_gibbs_convergence(
            materialize(exp, traj)?,
            &exp.potential,
            tol.unwrap_or(1e-2),
        ),
        "lq_identity" => check_lq_refinement(exp, tol.unwrap_or(1e-3)),
        "cost_properties" => Ok(check_cost_properties(
            &exp.cost,
            spec.samples.unwrap_or(1000),
            tol.unwrap_or(1e-6),
            opts.seed,
        )),
        "fv_cross_validation" => {
            check_fv_cross_validation(exp, traj, tol.unwrap_or(5e-2))
        }
        other => Err(Error::Config(format!("unknown check `{other}`"))),
    }
}

/// The log-transform identity at the configured resolution and at double
/// resolution; the mismatch must meet the tolerance and is expected to
/// shrink at second order (the ratio is reported alongside).
fn check_lq_refinement(exp: &Experiment, tol: f64) -> Result<PrincipleReport> {
    let n = exp.grid.n_cells;
    // The centered interface density is the second-order choice for this
    // identity; the upwind bias would cap the ratio at first order.
    let ctx = exp
        .context()
        .with_interface_density(InterfaceDensity::Centered);
    let coarse = ctx.check_lq_identity(&exp.initial)?;
    let fine_grid = Grid1D::new(exp.grid.x_min, exp.grid.x_max, 2 * n)?;
    let fine_u = exp.initial_on(fine_grid)?;
    let fine_ctx = exp
        .context_on(fine_grid)
        .with_interface_density(InterfaceDensity::Centered);
    let fine = fine_ctx.check_lq_identity(&fine_u)?;
    let ratio = if fine > 0.0 {
        coarse / fine
    } else {
        f64::INFINITY
    };
    let hypotheses = vec![
        format!("relative mismatch at n = {n}: {coarse:.3e}"),
        format!("relative mismatch at n = {}: {fine:.3e}", 2 * n),
        format!("refinement ratio: {ratio:.2}"),
    ];
    Ok(PrincipleReport::from_measurement(
        "lq_identity",
        hypotheses,
        -coarse,
        tol,
    ))
}

/// Seeded random audit of the cost's dual side; the margin is the negated
/// worst defect across all applicable measures.
fn check_cost_properties(
    cost: &CostFunction,
    samples: usize,
    tol: f64,
    seed: u64,
) -> PrincipleReport {
    let audit = sample_audit(cost, samples, seed);
    let fmt_opt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.3e}"),
        None => "n/a".to_string(),
    };
    let hypotheses = vec![
        format!("samples: {} (seed {seed})", audit.samples),
        format!("oddness defect: {:.3e}", audit.max_oddness_defect),
        format!(
            "monotonicity defect: {:.3e}",
            audit.max_monotonicity_defect
        ),
        format!("gradient fd defect: {:.3e}", audit.max_gradient_fd_defect),
        format!("hessian fd defect: {:.3e}", audit.max_hessian_fd_defect),
        format!(
            "min hessian eigenvalue: {:.3e}",
            audit.min_hessian_eigenvalue
        ),
        format!("speed excess: {}", fmt_opt(audit.max_speed_excess)),
        format!("saturation gap: {}", fmt_opt(audit.max_saturation_gap)),
        format!("legendre defect: {}", fmt_opt(audit.max_legendre_defect)),
    ];
    PrincipleReport::from_measurement(
        "cost_properties",
        hypotheses,
        -audit.worst_defect(),
        tol,
    )
}

/// Final-state agreement between the variational run and a matched
/// finite-volume run. The matched run uses the combined force coupling,
/// which is the continuum limit of the variational scheme; the separate
/// coupling differs at the equation level once a force is present.
fn check_fv_cross_validation(
    exp: &Experiment,
    traj: &mut Option<Trajectory>,
    tol: f64,
) -> Result<PrincipleReport> {
    if exp.raw.experiment.integrator != Integrator::Jko {
        return Err(Error::Config(
            "check `fv_cross_validation` requires integrator \"jko\""
                .to_string(),
        ));
    }
    let section = exp.raw.jko.as_ref().expect("validated at load");
    let t_end = section.h * section.n_steps as f64;
    let jko_traj = materialize(exp, traj)?;
    let (_, final_jko) = jko_traj.last();
    let ctx = exp.context().with_flux_mode(FluxMode::CombinedArgument);
    let fv_traj = run_fv(&RunConfig::new(ctx, t_end)?, &exp.initial)?;
    let distance = final_jko.l1_distance(&fv_traj.last().1)?;
    let hypotheses = vec![
        format!("horizon: {t_end}"),
        "matched run flux mode: combined".to_string(),
        format!("final l1 distance: {distance:.3e}"),
    ];
    Ok(PrincipleReport::from_measurement(
        "fv_cross_validation",
        hypotheses,
        -distance,
        tol,
    ))
}

/// Parsed sweep axes: key plus the raw value strings, in argument order.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::with_capacity(args.len());
    for arg in args {
        let (key, values) = arg.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "sweep override `{arg}` is not of the form key=v1,v2"
            ))
        })?;
        if axes.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("duplicate sweep key `{key}`")));
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!(
                "sweep key `{key}` has no values"
            )));
        }
        axes.push((key.to_string(), values));
    }
    Ok(axes)
}

/// Applies one `key=value` override to a raw config.
fn apply_override(
    raw: &mut config::ExperimentConfig,
    key: &str,
    value: &str,
) -> Result<()> {
    let bad_num = || {
        Error::Config(format!("sweep value `{value}` for `{key}` is not a number"))
    };
    match key {
        "c" => {
            if !raw.experiment.cost.starts_with("relativistic:") {
                return Err(Error::Config(format!(
                    "sweep key `c` needs a relativistic cost, config has `{}`",
                    raw.experiment.cost
                )));
            }
            let _: f64 = value.parse().map_err(|_| bad_num())?;
            raw.experiment.cost = format!("relativistic:{value}");
        }
        "kappa" => {
            if !raw.experiment.potential.starts_with("quadratic:") {
                return Err(Error::Config(format!(
                    "sweep key `kappa` needs a quadratic potential, config \
                     has `{}`",
                    raw.experiment.potential
                )));
            }
            let _: f64 = value.parse().map_err(|_| bad_num())?;
            raw.experiment.potential = format!("quadratic:{value}");
        }
        "n_cells" => {
            raw.grid.n_cells = value.parse().map_err(|_| bad_num())?;
        }
        "t_end" => {
            let run = raw.run.as_mut().ok_or_else(|| {
                Error::Config("sweep key `t_end` needs a [run] section".into())
            })?;
            run.t_end = value.parse().map_err(|_| bad_num())?;
        }
        "cfl" => {
            let run = raw.run.as_mut().ok_or_else(|| {
                Error::Config("sweep key `cfl` needs a [run] section".into())
            })?;
            run.cfl = Some(value.parse().map_err(|_| bad_num())?);
        }
        "h" => {
            let jko = raw.jko.as_mut().ok_or_else(|| {
                Error::Config("sweep key `h` needs a [jko] section".into())
            })?;
            jko.h = value.parse().map_err(|_| bad_num())?;
        }
        "n_steps" => {
            let jko = raw.jko.as_mut().ok_or_else(|| {
                Error::Config("sweep key `n_steps` needs a [jko] section".into())
            })?;
            jko.n_steps = value.parse().map_err(|_| bad_num())?;
        }
        "n_quantiles" => {
            let jko = raw.jko.as_mut().ok_or_else(|| {
                Error::Config(
                    "sweep key `n_quantiles` needs a [jko] section".into(),
                )
            })?;
            jko.n_quantiles = value.parse().map_err(|_| bad_num())?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep key `{other}` (known: c, kappa, n_cells, \
                 t_end, cfl, h, n_steps, n_quantiles)"
            )));
        }
    }
    Ok(())
}

/// Cartesian product of the axes, first key outermost.
fn cartesian(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for point in &points {
            for value in values {
                let mut grown = point.clone();
                grown.push((key.clone(), value.clone()));
                next.push(grown);
            }
        }
        points = next;
    }
    points
}

struct PointOutcome {
    label: String,
    values: Vec<String>,
    code: u8,
    reports: Vec<PrincipleReport>,
    log: String,
    error: Option<String>,
}

fn run_point(
    base: &Experiment,
    assignment: &[(String, String)],
    root: &Path,
    opts: &GlobalOpts,
) -> PointOutcome {
    let label = assignment
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("_");
    let values = assignment.iter().map(|(_, v)| v.clone()).collect();
    let result = (|| -> Result<ExecOutcome> {
        let mut raw = base.raw.clone();
        for (key, value) in assignment {
            apply_override(&mut raw, key, value)?;
        }
        let exp = Experiment::realize(
            raw,
            base.config_text.clone(),
            base.base_dir.clone(),
        )?;
        let point_opts = GlobalOpts {
            output_dir: Some(root.join(&label)),
            strict: opts.strict,
            seed: opts.seed,
        };
        // Integrate only when a check needs it, unless there is nothing
        // else for the point to produce.
        let always_run = exp.raw.checks.is_empty();
        execute(&exp, "sweep", &point_opts, assignment, always_run)
    })();
    match result {
        Ok(outcome) => PointOutcome {
            label,
            values,
            code: outcome.code,
            reports: outcome.reports,
            log: outcome.log,
            error: None,
        },
        Err(e) => PointOutcome {
            label,
            values,
            code: exit_code_for(&e),
            reports: Vec::new(),
            log: String::new(),
            error: Some(e.to_string()),
        },
    }
}

fn cmd_sweep(
    path: &Path,
    override_args: &[String],
    opts: &GlobalOpts,
) -> Result<u8> {
    let base = config::load(path)?;
    let axes = parse_overrides(override_args)?;
    // Fail fast on keys the config cannot accept, before spawning points.
    for (key, values) in &axes {
        let mut probe = base.raw.clone();
        apply_override(&mut probe, key, &values[0])?;
    }
    let points = cartesian(&axes);
    let root = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| base.output_dir());
    output::ensure_dir(&root)?;

    let outcomes: Vec<PointOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = points
            .iter()
            .map(|assignment| {
                let base = &base;
                let root = root.as_path();
                let opts = &*opts;
                scope.spawn(move || run_point(base, assignment, root, opts))
            })
            .collect();
        handles
            .into_iter()
            .zip(&points)
            .map(|(handle, assignment)| {
                handle.join().unwrap_or_else(|_| PointOutcome {
                    label: assignment
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join("_"),
                    values: assignment
                        .iter()
                        .map(|(_, v)| v.clone())
                        .collect(),
                    code: EXIT_RUNTIME,
                    reports: Vec::new(),
                    log: String::new(),
                    error: Some("sweep point panicked".to_string()),
                })
            })
            .collect()
    });

    let keys: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    let mut rows = Vec::new();
    for outcome in &outcomes {
        println!("== {}", outcome.label);
        if let Some(error) = &outcome.error {
            println!("error: {error}");
            rows.push(SweepRow {
                point: outcome.label.clone(),
                values: outcome.values.clone(),
                check: "run".to_string(),
                margin: None,
                tolerance: None,
                verdict: "Error".to_string(),
                note: error.clone(),
            });
            continue;
        }
        print!("{}", outcome.log);
        if outcome.reports.is_empty() {
            rows.push(SweepRow {
                point: outcome.label.clone(),
                values: outcome.values.clone(),
                check: "run".to_string(),
                margin: None,
                tolerance: None,
                verdict: "Ok".to_string(),
                note: String::new(),
            });
        }
        for report in &outcome.reports {
            rows.push(SweepRow {
                point: outcome.label.clone(),
                values: outcome.values.clone(),
                check: report.check.clone(),
                margin: Some(report.margin),
                tolerance: Some(report.tolerance),
                verdict: report.verdict.to_string(),
                note: String::new(),
            });
        }
    }
    output::write_sweep_summary(&root, &keys, &rows)?;
    let mut meta = RunMeta::new("sweep");
    meta.name = base.raw.experiment.name.clone();
    meta.integrator = Some(base.raw.experiment.integrator.to_string());
    meta.seed = opts.seed;
    meta.strict_hypotheses = opts.strict;
    meta.overrides = axes
        .iter()
        .map(|(k, v)| [k.clone(), v.join(",")])
        .collect();
    meta.config = base.config_text.clone();
    output::write_meta(&root, &meta)?;
    println!("wrote {}", root.join("sweep_summary.csv").display());
    Ok(outcomes.iter().map(|o| o.code).max().unwrap_or(EXIT_OK))
}
