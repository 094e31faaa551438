//! External potentials, the Gibbs equilibrium, and the force-flux sign test.
//!
//! The drift part of the equation is driven by `f*'(V')`, so the potential
//! enters only through its first two derivatives. Four families cover the
//! experiments: the zero potential, a confining quadratic, a symmetric double
//! well (the standard metastability fixture), and arbitrary polynomials.
//!
//! Two derived quantities matter structurally:
//!
//! * [`gibbs_density`], the stationary state `exp(-V)/Z` normalized under the
//!   grid's own midpoint quadrature so that its discrete mass is exactly one;
//! * [`force_flux_divergence`], the quantity `d/dx [f*'(V'(x))]` whose sign
//!   over the domain ([`classify_sign`]) gates the maximum-principle checks:
//!   convex potentials give a non-negative divergence, concave ones
//!   non-positive.

use std::fmt;
use std::str::FromStr;

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::{DensityField, Grid1D};
use crate::numeric::neumaier_sum;

/// External potential `V(x)` with closed-form first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `V = 0`.
    Zero,
    /// `V(x) = kappa x^2 / 2`, `kappa > 0`.
    Quadratic { kappa: f64 },
    /// `V(x) = (x^2 - a^2)^2 / 4`, minima at `x = -a` and `x = a`.
    DoubleWell { a: f64 },
    /// `V(x) = sum_i p_i x^i`.
    Polynomial { coeffs: Vec<f64> },
}

impl Potential {
    /// Confining quadratic; requires `kappa > 0`.
    pub fn quadratic(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Config(format!(
                "quadratic potential needs a positive finite stiffness, got {kappa}"
            )));
        }
        Ok(Self::Quadratic { kappa })
    }

    /// Symmetric double well with minima at `-a` and `a`.
    pub fn double_well(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Config(format!(
                "double-well potential needs a finite parameter, got {a}"
            )));
        }
        Ok(Self::DoubleWell { a })
    }

    /// Polynomial with the given coefficients, constant term first.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config(
                "polynomial potential needs at least one coefficient".into(),
            ));
        }
        if let Some(bad) = coeffs.iter().find(|p| !p.is_finite()) {
            return Err(Error::Config(format!(
                "polynomial potential has a non-finite coefficient: {bad}"
            )));
        }
        Ok(Self::Polynomial { coeffs })
    }

    /// `V(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { kappa } => 0.5 * kappa * x * x,
            Self::DoubleWell { a } => {
                let w = x * x - a * a;
                0.25 * w * w
            }
            Self::Polynomial { coeffs } => horner(coeffs, x),
        }
    }

    /// `V'(x)`.
    pub fn grad(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { kappa } => kappa * x,
            Self::DoubleWell { a } => x * (x * x - a * a),
            Self::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, p)| i as f64 * p)
                    .collect();
                horner(&d, x)
            }
        }
    }

    /// `V''(x)`.
    pub fn hess(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { kappa } => *kappa,
            Self::DoubleWell { a } => 3.0 * x * x - a * a,
            Self::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .skip(2)
                    .map(|(i, p)| (i * (i - 1)) as f64 * p)
                    .collect();
                horner(&d, x)
            }
        }
    }

    /// Whether the potential's minimum over the grid is attained strictly
    /// inside. When false, the equilibrium density peaks at a boundary (the
    /// potential does not grow toward both grid ends) and the command-line
    /// interface emits a warning.
    pub fn confines(&self, grid: &Grid1D) -> bool {
        let mut argmin = 0;
        let mut min = f64::INFINITY;
        for (i, x) in grid.cell_centers().enumerate() {
            let v = self.value(x);
            if v < min {
                min = v;
                argmin = i;
            }
        }
        argmin != 0 && argmin != grid.n_cells - 1
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &p in coeffs.iter().rev() {
        acc = acc * x + p;
    }
    acc
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Quadratic { kappa } => write!(f, "quadratic:{kappa}"),
            Self::DoubleWell { a } => write!(f, "doublewell:{a}"),
            Self::Polynomial { coeffs } => {
                write!(f, "poly:")?;
                for (i, p) in coeffs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Potential {
    type Err = Error;

    /// Parses `zero`, `quadratic:<kappa>`, `doublewell:<a>`, or
    /// `poly:<p0>,<p1>,...` (constant term first).
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, what: &str| -> Result<f64> {
            a.ok_or_else(|| Error::Config(format!("{what} needs a parameter in `{s}`")))?
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} parameter in `{s}`")))
        };
        match kind {
            "zero" => Ok(Self::Zero),
            "quadratic" => Self::quadratic(num(arg, "quadratic potential")?),
            "doublewell" => Self::double_well(num(arg, "double-well potential")?),
            "poly" => {
                let body = arg
                    .ok_or_else(|| Error::Config(format!("poly needs coefficients in `{s}`")))?;
                let coeffs = body
                    .split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("bad polynomial coefficient `{t}` in `{s}`"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Self::polynomial(coeffs)
            }
            other => Err(Error::Config(format!("unknown potential kind `{other}`"))),
        }
    }
}

/// Sign of the force-flux divergence over a grid: the hypothesis gate for the
/// maximum and minimum principles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    /// Divergence `>= -1e-12` everywhere (includes the identically-zero case).
    NonNegative,
    /// Divergence `<= 1e-12` everywhere.
    NonPositive,
    /// Both signs occur.
    Mixed,
}

impl fmt::Display for SignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonNegative => write!(f, "non-negative"),
            Self::NonPositive => write!(f, "non-positive"),
            Self::Mixed => write!(f, "mixed"),
        }
    }
}

/// Tolerance for [`classify_sign`]: values within this of zero count for both
/// signs, and ties resolve toward [`SignClass::NonNegative`].
pub const SIGN_TOL: f64 = 1e-12;

/// The equilibrium density `exp(-V)/Z`, normalized with the grid's midpoint
/// rule so that the discrete mass is exactly one.
///
/// Fails only when `exp(-V)` overflows the floating-point range somewhere on
/// the grid.
pub fn gibbs_density(v: &Potential, grid: &Grid1D) -> Result<DensityField> {
    let weights: Vec<f64> = grid.cell_centers().map(|x| (-v.value(x)).exp()).collect();
    let z = grid.dx() * neumaier_sum(weights.iter().copied());
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::NonFiniteField);
    }
    DensityField::from_fn(*grid, |x| (-v.value(x)).exp() / z)
}

/// `d/dx [f*'(V'(x))] = f*''(V'(x)) V''(x)`: the zeroth-order coefficient the
/// force contributes to the transformed operator. For the relativistic cost
/// with speed one this is `V'' / (1 + V'^2)^{3/2}`.
pub fn force_flux_divergence(v: &Potential, cost: &CostFunction, x: f64) -> f64 {
    cost.dual_hess_1d(v.grad(x)) * v.hess(x)
}

/// Classifies the sign of [`force_flux_divergence`] over all cell centers.
pub fn classify_sign(v: &Potential, cost: &CostFunction, grid: &Grid1D) -> SignClass {
    let mut all_nonneg = true;
    let mut all_nonpos = true;
    for x in grid.cell_centers() {
        let d = force_flux_divergence(v, cost, x);
        if d < -SIGN_TOL {
            all_nonneg = false;
        }
        if d > SIGN_TOL {
            all_nonpos = false;
        }
    }
    if all_nonneg {
        SignClass::NonNegative
    } else if all_nonpos {
        SignClass::NonPositive
    } else {
        SignClass::Mixed
    }
}

/// The free energy `integral of (u log u - u + V u)`, evaluated with the
/// midpoint rule and compensated summation; `0 log 0` counts as zero.
pub fn free_energy(u: &DensityField, v: &Potential) -> f64 {
    let grid = u.grid;
    let terms = u.values().iter().zip(grid.cell_centers()).map(|(&ui, x)| {
        let ent = if ui > 0.0 { ui * ui.ln() } else { 0.0 };
        ent - ui + v.value(x) * ui
    });
    grid.dx() * neumaier_sum(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_potential_gibbs_is_uniform() {
        let grid = Grid1D::new(0.0, 1.0, 100).unwrap();
        let u = gibbs_density(&Potential::Zero, &grid).unwrap();
        for &v in u.values() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(u.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_gibbs_matches_standard_normal() {
        let grid = Grid1D::new(-6.0, 6.0, 400).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let u = gibbs_density(&v, &grid).unwrap();
        let peak = u.values().iter().cloned().fold(0.0, f64::max);
        // Peak of the standard normal density.
        assert!((peak - 0.39894).abs() < 1e-3, "peak = {peak}");
        assert_relative_eq!(u.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn double_well_gibbs_is_symmetric_bimodal() {
        let grid = Grid1D::new(-3.0, 3.0, 300).unwrap();
        let v = Potential::double_well(1.0).unwrap();
        let u = gibbs_density(&v, &grid).unwrap();
        let vals = u.values();
        let n = vals.len();
        for i in 0..n / 2 {
            assert_relative_eq!(vals[i], vals[n - 1 - i], max_relative = 1e-10);
        }
        // Peaks sit at the wells x = -1 and x = 1.
        let argmax = (0..n).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let x_peak = grid.cell_center(argmax).abs();
        assert!((x_peak - 1.0).abs() <= grid.dx(), "peak at {x_peak}");
    }

    #[test]
    fn gibbs_mass_is_unit_across_potentials() {
        let grid = Grid1D::new(-4.0, 5.0, 237).unwrap();
        let potentials = [
            Potential::Zero,
            Potential::quadratic(3.0).unwrap(),
            Potential::double_well(1.5).unwrap(),
            Potential::polynomial(vec![0.2, -0.1, 0.5, 0.0, 0.01]).unwrap(),
        ];
        for v in &potentials {
            assert_relative_eq!(gibbs_density(v, &grid).unwrap().mass(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn force_flux_divergence_fixtures() {
        let v = Potential::quadratic(1.0).unwrap();
        let c = CostFunction::relativistic(1.0).unwrap();
        // V'' = 1, V'(0) = 0: divergence 1 at the origin.
        assert_relative_eq!(force_flux_divergence(&v, &c, 0.0), 1.0, epsilon = 1e-15);
        // V'(1) = 1: 1 / 2^{3/2}.
        assert_relative_eq!(
            force_flux_divergence(&v, &c, 1.0),
            2.0f64.powf(-1.5),
            epsilon = 1e-15
        );
        assert_eq!(force_flux_divergence(&Potential::Zero, &c, 0.7), 0.0);
    }

    #[test]
    fn force_flux_divergence_matches_closed_form_for_unit_speed() {
        // For the relativistic cost with c = 1 the divergence has the closed
        // form V'' / (1 + V'^2)^{3/2}; check it for a rough polynomial.
        let v = Potential::polynomial(vec![0.3, -1.2, 0.4, 0.25]).unwrap();
        let c = CostFunction::relativistic(1.0).unwrap();
        for i in -20..=20 {
            let x = i as f64 * 0.15;
            let vp = v.grad(x);
            let want = v.hess(x) / (1.0 + vp * vp).powf(1.5);
            assert_relative_eq!(
                force_flux_divergence(&v, &c, x),
                want,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn sign_classification_fixtures() {
        let c = CostFunction::relativistic(1.0).unwrap();
        let grid = Grid1D::new(-3.0, 3.0, 200).unwrap();
        let quad = Potential::quadratic(1.0).unwrap();
        assert_eq!(classify_sign(&quad, &c, &grid), SignClass::NonNegative);
        // Identically zero satisfies both bounds; ties go to non-negative.
        assert_eq!(
            classify_sign(&Potential::Zero, &c, &grid),
            SignClass::NonNegative
        );
        let well = Potential::double_well(1.0).unwrap();
        assert_eq!(classify_sign(&well, &c, &grid), SignClass::Mixed);
        // Concave V on [-1, 1].
        let concave = Potential::polynomial(vec![0.0, 0.0, -0.5]).unwrap();
        let narrow = Grid1D::new(-1.0, 1.0, 50).unwrap();
        assert_eq!(
            classify_sign(&concave, &c, &narrow),
            SignClass::NonPositive
        );
    }

    #[test]
    fn convex_potentials_classify_non_negative_for_every_cost_kind() {
        let grid = Grid1D::new(-5.0, 5.0, 173).unwrap();
        let costs = [
            CostFunction::relativistic(1.0).unwrap(),
            CostFunction::relativistic(0.5).unwrap(),
            CostFunction::classical_quadratic(),
            CostFunction::tabulated_radial(crate::tabulated::TabulatedProfile::relativistic(
                1.0, 2000,
            ))
            .unwrap(),
        ];
        for kappa in [0.3, 1.0, 5.0] {
            let v = Potential::quadratic(kappa).unwrap();
            for c in &costs {
                assert_eq!(classify_sign(&v, c, &grid), SignClass::NonNegative);
            }
        }
    }

    #[test]
    fn free_energy_fixtures() {
        // Uniform density on [0, 1] with V = 0: 0 - 1 + 0 = -1.
        let grid = Grid1D::new(0.0, 1.0, 64).unwrap();
        let u = DensityField::from_fn(grid, |_| 1.0).unwrap();
        assert_relative_eq!(free_energy(&u, &Potential::Zero), -1.0, epsilon = 1e-12);
        // Constant 2 (mass 2): 2 ln 2 - 2.
        let u2 = DensityField::from_fn(grid, |_| 2.0).unwrap();
        assert_relative_eq!(
            free_energy(&u2, &Potential::Zero),
            2.0 * 2.0f64.ln() - 2.0,
            epsilon = 1e-12
        );
        // Standard Gaussian equilibrium: -1 - ln(2 pi) / 2.
        let wide = Grid1D::new(-6.0, 6.0, 400).unwrap();
        let v = Potential::quadratic(1.0).unwrap();
        let g = gibbs_density(&v, &wide).unwrap();
        let want = -1.0 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((free_energy(&g, &v) - want).abs() < 1e-3);
    }

    #[test]
    fn free_energy_treats_vacuum_cells_as_zero_entropy() {
        let grid = Grid1D::new(0.0, 2.0, 10).unwrap();
        let mut vals = vec![0.0; 10];
        vals[4] = 2.5;
        vals[5] = 2.5;
        let u = DensityField::new(grid, vals).unwrap();
        let f = free_energy(&u, &Potential::Zero);
        assert!(f.is_finite());
        // Two cells of width 0.2 at height 2.5: mass 1, entropy term
        // 0.4 * 2.5 ln 2.5, minus mass.
        assert_relative_eq!(f, 0.4 * 2.5 * 2.5f64.ln() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn confinement_detection() {
        let wide = Grid1D::new(-6.0, 6.0, 100).unwrap();
        assert!(Potential::quadratic(1.0).unwrap().confines(&wide));
        assert!(!Potential::Zero.confines(&wide));
        // V = x on [0, 1] pushes mass to the left boundary.
        let slope = Potential::polynomial(vec![0.0, 1.0]).unwrap();
        let unit = Grid1D::new(0.0, 1.0, 50).unwrap();
        assert!(!slope.confines(&unit));
    }

    #[test]
    fn parse_round_trips() {
        for s in ["zero", "quadratic:2.5", "doublewell:1", "poly:0,1,2"] {
            let v: Potential = s.parse().unwrap();
            assert_eq!(v.to_string(), s);
            let again: Potential = v.to_string().parse().unwrap();
            assert_eq!(again, v);
        }
    }

    #[test]
    fn parse_rejects_malformed_strings() {
        for s in [
            "quadratic:-1",
            "quadratic:abc",
            "quadratic",
            "wavy:1",
            "poly:",
            "poly:1,oops",
            "doublewell:inf",
        ] {
            assert!(s.parse::<Potential>().is_err(), "accepted `{s}`");
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(x in -3.0f64..3.0) {
            let families = [
                Potential::Zero,
                Potential::quadratic(1.7).unwrap(),
                Potential::double_well(1.2).unwrap(),
                Potential::polynomial(vec![0.5, -0.3, 0.2, 0.1]).unwrap(),
            ];
            let h = 1e-5;
            for v in &families {
                let fd_grad = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
                prop_assert!((v.grad(x) - fd_grad).abs() < 1e-6);
                let fd_hess = (v.grad(x + h) - v.grad(x - h)) / (2.0 * h);
                prop_assert!((v.hess(x) - fd_hess).abs() < 1e-6);
            }
        }
    }
}
