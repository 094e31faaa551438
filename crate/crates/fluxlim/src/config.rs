//! Experiment configuration files.
//!
//! An experiment is described by a TOML file naming the model (cost,
//! potential, initial state), the grid, the integrator with its parameters,
//! the structural checks to run afterwards, and the output directory.
//! Unknown keys are rejected everywhere so a typo cannot silently change an
//! experiment. Relative paths inside a config — tabulated cost profiles,
//! CSV initial states, the output directory — resolve against the directory
//! containing the config file.
//!
//! ```toml
//! [experiment]
//! name = "relaxation"
//! cost = "relativistic:1.0"       # relativistic:<c> | classical | tabulated:<path>
//! potential = "quadratic:1.0"     # zero | quadratic:<k> | doublewell:<a> | poly:<c0,c1,...>
//! initial = "gaussian(0.3,0.6)"   # gaussian(center,width) | indicator(a,b) | gibbs | csv:<path>
//! integrator = "fv"               # fv | jko
//! output_dir = "out/relaxation"   # optional; may be overridden on the command line
//!
//! [grid]
//! x_min = -4.0
//! x_max = 4.0
//! n_cells = 200
//!
//! [run]                           # required when integrator = "fv"
//! t_end = 20.0
//! snapshots = [2.0, 5.0, 10.0]    # optional, strictly increasing, < t_end
//! cfl = 0.4                       # optional
//! floor = 1e-12                   # optional positivity floor
//! flux_mode = "separate"          # optional: separate | combined
//!
//! [jko]                           # required when integrator = "jko"
//! h = 0.01
//! n_steps = 10
//! n_quantiles = 200
//! newton_tol = 1e-10              # optional
//! max_newton_iters = 100          # optional
//!
//! [[checks]]
//! name = "gibbs_convergence"      # see the check roster in the cli module
//! tolerance = 1e-2                # optional; every check has a default
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::{DensityField, Grid1D};
use crate::jko::JkoConfig;
use crate::operators::{BoundaryCondition, FluxMode, OperatorContext};
use crate::potential::{gibbs_density, Potential};
use crate::solver::RunConfig;
use crate::tabulated::TabulatedProfile;

/// Check names a config may request; anything else is rejected at load.
pub const KNOWN_CHECKS: [&str; 9] = [
    "stationary",
    "comparison",
    "weak_maximum",
    "weak_minimum",
    "propagation",
    "classical_limit",
    "gibbs_convergence",
    "lq_identity",
    "cost_properties",
];

/// Additional check available for variational runs.
pub const JKO_ONLY_CHECKS: [&str; 1] = ["fv_cross_validation"];

/// Raw shape of a config file, straight from TOML.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub grid: GridSection,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub jko: Option<JkoSection>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub name: Option<String>,
    pub cost: String,
    pub potential: String,
    pub initial: String,
    pub integrator: Integrator,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Explicit conservative finite-volume integration.
    Fv,
    /// Implicit variational stepping in quantile coordinates.
    Jko,
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Integrator::Fv => write!(f, "fv"),
            Integrator::Jko => write!(f, "jko"),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default)]
    pub flux_mode: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JkoSection {
    pub h: f64,
    pub n_steps: usize,
    pub n_quantiles: usize,
    #[serde(default)]
    pub newton_tol: Option<f64>,
    #[serde(default)]
    pub max_newton_iters: Option<usize>,
}

/// One requested structural check. Unused fields for a given check are
/// rejected when set, so configs stay self-describing.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// `comparison` only: constant lift of the second initial state.
    #[serde(default)]
    pub offset: Option<f64>,
    /// `propagation` only: support threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// `propagation` only: allowed band beyond the cone, in cells.
    #[serde(default)]
    pub slack_cells: Option<usize>,
    /// `classical_limit` only: comparison horizon.
    #[serde(default)]
    pub t: Option<f64>,
    /// `cost_properties` only: sample count.
    #[serde(default)]
    pub samples: Option<usize>,
}

/// A validated experiment with all model objects constructed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: ExperimentConfig,
    /// Verbatim text of the config file, echoed into run metadata.
    pub config_text: String,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub cost: CostFunction,
    pub potential: Potential,
    pub grid: Grid1D,
    pub initial: DensityField,
}

/// Loads and validates a config file.
pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    let raw: ExperimentConfig = toml::from_str(&text).map_err(|e| {
        Error::Config(format!("{}: {e}", path.display()))
    })?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Experiment::realize(raw, text, base_dir)
}

impl Experiment {
    /// Validates a raw config and constructs the model objects.
    pub fn realize(
        raw: ExperimentConfig,
        config_text: String,
        base_dir: PathBuf,
    ) -> Result<Self> {
        match raw.experiment.integrator {
            Integrator::Fv if raw.run.is_none() => {
                return Err(Error::Config(
                    "integrator \"fv\" requires a [run] section".to_string(),
                ));
            }
            Integrator::Jko if raw.jko.is_none() => {
                return Err(Error::Config(
                    "integrator \"jko\" requires a [jko] section".to_string(),
                ));
            }
            _ => {}
        }
        if let Some(run) = &raw.run {
            if let Some(mode) = &run.flux_mode {
                parse_flux_mode(mode)?;
            }
        }
        for check in &raw.checks {
            let known = KNOWN_CHECKS.contains(&check.name.as_str())
                || JKO_ONLY_CHECKS.contains(&check.name.as_str());
            if !known {
                return Err(Error::Config(format!(
                    "unknown check `{}` (known: {}, {})",
                    check.name,
                    KNOWN_CHECKS.join(", "),
                    JKO_ONLY_CHECKS.join(", "),
                )));
            }
        }
        let grid = Grid1D::new(
            raw.grid.x_min,
            raw.grid.x_max,
            raw.grid.n_cells,
        )?;
        let cost = parse_cost(&raw.experiment.cost, &base_dir)?;
        let potential: Potential = raw.experiment.potential.parse()?;
        let initial = build_initial(
            &raw.experiment.initial,
            grid,
            &potential,
            &base_dir,
        )?;
        Ok(Self {
            raw,
            config_text,
            base_dir,
            cost,
            potential,
            grid,
            initial,
        })
    }

    /// The configured flux mode (separate unless overridden).
    pub fn flux_mode(&self) -> FluxMode {
        self.raw
            .run
            .as_ref()
            .and_then(|r| r.flux_mode.as_deref())
            .map(|m| parse_flux_mode(m).expect("validated at load"))
            .unwrap_or_default()
    }

    /// Closed-boundary operator context on the experiment grid.
    pub fn context(&self) -> OperatorContext {
        self.context_on(self.grid)
    }

    /// Closed-boundary operator context on an arbitrary grid (used by
    /// refinement checks).
    pub fn context_on(&self, grid: Grid1D) -> OperatorContext {
        OperatorContext::new(
            self.cost.clone(),
            self.potential.clone(),
            grid,
            BoundaryCondition::NoFlux,
        )
        .with_flux_mode(self.flux_mode())
    }

    /// Finite-volume run configuration from the `[run]` section.
    pub fn run_config(&self) -> Result<RunConfig> {
        let run = self.raw.run.as_ref().ok_or_else(|| {
            Error::Config("missing [run] section".to_string())
        })?;
        let mut config = RunConfig::new(self.context(), run.t_end)?
            .with_snapshots(run.snapshots.clone())?;
        if let Some(cfl) = run.cfl {
            config = config.with_cfl_factor(cfl)?;
        }
        if let Some(floor) = run.floor {
            config = config.with_positivity_floor(floor)?;
        }
        Ok(config)
    }

    /// Variational run configuration from the `[jko]` section.
    pub fn jko_config(&self) -> Result<JkoConfig> {
        let jko = self.raw.jko.as_ref().ok_or_else(|| {
            Error::Config("missing [jko] section".to_string())
        })?;
        let mut config = JkoConfig::new(
            self.cost.clone(),
            self.potential.clone(),
            jko.h,
            jko.n_quantiles,
        )?;
        if let Some(tol) = jko.newton_tol {
            config = config.with_newton_tol(tol)?;
        }
        if let Some(iters) = jko.max_newton_iters {
            config = config.with_max_newton_iters(iters)?;
        }
        Ok(config)
    }

    /// Re-evaluates the initial-condition spec on another grid. Fails for
    /// file-based specs, which have no analytic form to resample.
    pub fn initial_on(&self, grid: Grid1D) -> Result<DensityField> {
        if self.raw.experiment.initial.starts_with("csv:") {
            return Err(Error::Config(
                "this check refines the grid and needs an analytic initial \
                 condition, not csv:"
                    .to_string(),
            ));
        }
        build_initial(
            &self.raw.experiment.initial,
            grid,
            &self.potential,
            &self.base_dir,
        )
    }

    /// Output directory: the configured one (resolved against the config
    /// directory) or `out/<name>` under the current directory.
    pub fn output_dir(&self) -> PathBuf {
        match &self.raw.experiment.output_dir {
            Some(dir) if dir.is_absolute() => dir.clone(),
            Some(dir) => self.base_dir.join(dir),
            None => {
                let name = self
                    .raw
                    .experiment
                    .name
                    .clone()
                    .unwrap_or_else(|| "experiment".to_string());
                PathBuf::from("out").join(name)
            }
        }
    }
}

fn parse_flux_mode(mode: &str) -> Result<FluxMode> {
    match mode {
        "separate" => Ok(FluxMode::SeparateArgument),
        "combined" => Ok(FluxMode::CombinedArgument),
        other => Err(Error::Config(format!(
            "unknown flux_mode `{other}` (expected separate or combined)"
        ))),
    }
}

/// Parses `relativistic:<c>`, `classical`, or `tabulated:<path>`.
fn parse_cost(spec: &str, base_dir: &Path) -> Result<CostFunction> {
    if spec == "classical" {
        return Ok(CostFunction::classical_quadratic());
    }
    if let Some(c) = spec.strip_prefix("relativistic:") {
        let c: f64 = c.trim().parse().map_err(|_| {
            Error::Config(format!("invalid speed in cost `{spec}`"))
        })?;
        return CostFunction::relativistic(c);
    }
    if let Some(path) = spec.strip_prefix("tabulated:") {
        let resolved = resolve(base_dir, path.trim());
        let profile = TabulatedProfile::read_csv_path(&resolved)?;
        return CostFunction::tabulated_radial(profile);
    }
    Err(Error::Config(format!(
        "unknown cost kind `{spec}` (expected relativistic:<c>, classical, \
         or tabulated:<path>)"
    )))
}

/// Parses `gaussian(center,width)`, `indicator(a,b)`, `gibbs`, or
/// `csv:<path>` into a density on `grid`.
fn build_initial(
    spec: &str,
    grid: Grid1D,
    potential: &Potential,
    base_dir: &Path,
) -> Result<DensityField> {
    if spec == "gibbs" {
        return gibbs_density(potential, &grid);
    }
    if let Some(args) = paren_args(spec, "gaussian") {
        let (center, width) = two_floats(&args, spec)?;
        if !(width > 0.0) {
            return Err(Error::Config(format!(
                "gaussian width must be positive in `{spec}`"
            )));
        }
        return DensityField::from_fn(grid, |x| {
            (-(x - center) * (x - center) / (2.0 * width * width)).exp()
        })?
        .normalized();
    }
    if let Some(args) = paren_args(spec, "indicator") {
        let (a, b) = two_floats(&args, spec)?;
        if !(a < b) {
            return Err(Error::Config(format!(
                "indicator needs a < b in `{spec}`"
            )));
        }
        // Mollified over two cells so the log-slope stays representable.
        let dx = grid.dx();
        return DensityField::from_fn(grid, |x| {
            ((x - a).min(b - x) / (2.0 * dx)).clamp(0.0, 1.0)
        })?
        .normalized();
    }
    if let Some(path) = spec.strip_prefix("csv:") {
        let resolved = resolve(base_dir, path.trim());
        return DensityField::read_csv_path(grid, &resolved);
    }
    Err(Error::Config(format!(
        "unknown initial condition `{spec}` (expected gaussian(center,width), \
         indicator(a,b), gibbs, or csv:<path>)"
    )))
}

fn resolve(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Extracts `args` from `prefix(args)`.
fn paren_args(spec: &str, prefix: &str) -> Option<String> {
    spec.strip_prefix(prefix)?
        .strip_prefix('(')?
        .strip_suffix(')')
        .map(str::to_string)
}

fn two_floats(args: &str, spec: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "expected two comma-separated numbers in `{spec}`"
        )));
    }
    let a: f64 = parts[0].parse().map_err(|_| {
        Error::Config(format!("invalid number `{}` in `{spec}`", parts[0]))
    })?;
    let b: f64 = parts[1].parse().map_err(|_| {
        Error::Config(format!("invalid number `{}` in `{spec}`", parts[1]))
    })?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[experiment]
name = "demo"
cost = "relativistic:1.0"
potential = "quadratic:1.0"
initial = "gaussian(0.0,0.5)"
integrator = "fv"

[grid]
x_min = -4.0
x_max = 4.0
n_cells = 100

[run]
t_end = 0.5
snapshots = [0.25]
"#;

    fn realize(text: &str) -> Result<Experiment> {
        let raw: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(e.to_string()))?;
        Experiment::realize(raw, text.to_string(), PathBuf::from("."))
    }

    #[test]
    fn full_config_realizes() {
        let exp = realize(BASE).unwrap();
        assert_eq!(exp.grid.n_cells, 100);
        assert!((exp.initial.mass() - 1.0).abs() < 1e-12);
        assert_eq!(exp.flux_mode(), FluxMode::SeparateArgument);
        let run = exp.run_config().unwrap();
        assert_eq!(run.t_end, 0.5);
        assert_eq!(run.snapshot_times, vec![0.25]);
        assert_eq!(exp.output_dir(), PathBuf::from("out/demo"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let text = format!("{BASE}\n[extra]\nfoo = 1\n");
        let err = realize(&text).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
        let text = BASE.replace("t_end = 0.5", "t_end = 0.5\nt_flnal = 2.0");
        let err = realize(&text).unwrap_err().to_string();
        assert!(err.contains("t_flnal"), "{err}");
    }

    #[test]
    fn unknown_cost_kind_is_named() {
        let text = BASE.replace("relativistic:1.0", "hyperbolic:1.0");
        let err = realize(&text).unwrap_err().to_string();
        assert!(err.contains("hyperbolic"), "{err}");
        assert!(err.contains("relativistic"), "{err}");
    }

    #[test]
    fn jko_integrator_requires_its_section() {
        let text = BASE.replace("integrator = \"fv\"", "integrator = \"jko\"");
        let err = realize(&text).unwrap_err().to_string();
        assert!(err.contains("[jko]"), "{err}");
    }

    #[test]
    fn jko_section_builds_a_config() {
        let text = format!(
            "{}\n[jko]\nh = 0.01\nn_steps = 10\nn_quantiles = 64\n",
            BASE.replace("integrator = \"fv\"", "integrator = \"jko\"")
        );
        let exp = realize(&text).unwrap();
        let cfg = exp.jko_config().unwrap();
        assert_eq!(cfg.h, 0.01);
        assert_eq!(cfg.n_quantiles, 64);
    }

    #[test]
    fn initial_condition_forms() {
        for (spec, check_mass) in [
            ("gaussian(0.0,0.5)", true),
            ("indicator(-0.5,0.5)", true),
            ("gibbs", true),
        ] {
            let text = BASE.replace("gaussian(0.0,0.5)", spec);
            let exp = realize(&text).unwrap();
            if check_mass {
                assert!(
                    (exp.initial.mass() - 1.0).abs() < 1e-9,
                    "{spec}: mass {}",
                    exp.initial.mass()
                );
            }
        }
        let err = realize(&BASE.replace("gaussian(0.0,0.5)", "blob(1,2)"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("blob"), "{err}");
        assert!(realize(&BASE.replace("gaussian(0.0,0.5)", "gaussian(0.0,-1.0)")).is_err());
        assert!(realize(&BASE.replace("gaussian(0.0,0.5)", "indicator(1.0,0.0)")).is_err());
    }

    #[test]
    fn csv_initial_resolves_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid1D::new(-4.0, 4.0, 100).unwrap();
        let u = DensityField::from_fn(grid, |x| (-(x * x)).exp())
            .unwrap()
            .normalized()
            .unwrap();
        u.write_csv_path(&dir.path().join("u0.csv")).unwrap();
        let config_path = dir.path().join("exp.toml");
        std::fs::write(
            &config_path,
            BASE.replace("gaussian(0.0,0.5)", "csv:u0.csv"),
        )
        .unwrap();
        let exp = load(&config_path).unwrap();
        assert!((exp.initial.mass() - 1.0).abs() < 1e-12);
        // Refinement-based checks cannot resample a file.
        assert!(exp.initial_on(Grid1D::new(-4.0, 4.0, 200).unwrap()).is_err());
    }

    #[test]
    fn flux_mode_parses_and_rejects() {
        let text = BASE.replace("t_end = 0.5", "t_end = 0.5\nflux_mode = \"combined\"");
        let exp = realize(&text).unwrap();
        assert_eq!(exp.flux_mode(), FluxMode::CombinedArgument);
        let text = BASE.replace("t_end = 0.5", "t_end = 0.5\nflux_mode = \"diagonal\"");
        assert!(realize(&text).is_err());
    }

    #[test]
    fn unknown_check_names_are_rejected() {
        let text = format!("{BASE}\n[[checks]]\nname = \"entropy_rate\"\n");
        let err = realize(&text).unwrap_err().to_string();
        assert!(err.contains("entropy_rate"), "{err}");
    }

    #[test]
    fn tabulated_cost_loads_from_a_profile_file() {
        let dir = tempfile::tempdir().unwrap();
        let profile = TabulatedProfile::relativistic(1.0, 256);
        let mut buf = Vec::new();
        profile.write_csv(&mut buf).unwrap();
        std::fs::write(dir.path().join("phi.csv"), &buf).unwrap();
        let config_path = dir.path().join("exp.toml");
        std::fs::write(
            &config_path,
            BASE.replace("relativistic:1.0", "tabulated:phi.csv"),
        )
        .unwrap();
        let exp = load(&config_path).unwrap();
        assert_eq!(exp.cost.speed_bound(), 1.0);
    }
}
