//! A 1-D numerical laboratory for flux-limited diffusion with external
//! force fields.
//!
//! The equation under study transports a probability density `u(t, x)` by
//! the continuity equation
//!
//! ```text
//! d/dt u = d/dx [ u ( f*'(d/dx V) + f*'(d/dx log u) ) ]
//! ```
//!
//! where `f*` is the convex conjugate of a radial transport cost. For the
//! relativistic cost the velocity map `f*'` is bounded, so densities spread
//! with finite speed; for the quadratic cost the equation reduces to classical
//! drift-diffusion `d/dt u = d/dx [u V'] + u''`.
//!
//! Two independent discretizations are implemented and cross-validated:
//!
//! * a conservative finite-volume scheme ([`solver`]) with upwind or centered
//!   interface densities, and
//! * a variational time integrator ([`jko`]) that advances the quantile
//!   (inverse CDF) representation by solving one implicit minimization per
//!   step.
//!
//! The [`diagnostics`] module turns the structural theory — equilibrium
//! states, finite propagation, comparison and maximum principles, free-energy
//! dissipation, the classical limit — into machine-checkable reports, which
//! the command-line interface aggregates and renders.

pub mod cli;
pub mod config;
pub mod cost;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod jko;
pub mod numeric;
pub mod operators;
pub mod output;
pub mod potential;
pub mod solver;
pub mod tabulated;

pub use cost::{sample_audit, CostAudit, CostFunction, SymMatrix};
pub use diagnostics::{PrincipleReport, Verdict};
pub use error::{Error, Result};
pub use geometry::{
    density_to_quantiles, quantiles_to_density, DensityField, Grid1D, QuantileField,
};
pub use jko::{jko_run, JkoConfig};
pub use operators::{BoundaryCondition, FluxMode, InterfaceDensity, OperatorContext};
pub use potential::{gibbs_density, Potential};
pub use solver::{run, RunConfig, StepRecord, Trajectory};
pub use tabulated::{numerical_conjugate, TabulatedCost, TabulatedProfile};
