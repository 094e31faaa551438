//! Transport cost functions and their convex duals.
//!
//! Every cost is radial. The solver and the variational integrator only see
//! the dual side: the conjugate value `phi*(z)`, its gradient (the velocity
//! map), and its Hessian (the diffusion tensor). Three families are
//! provided:
//!
//! * [`CostFunction::relativistic`]: `phi*(z) = c^2 (sqrt(1 + |z|^2/c^2) - 1)`,
//!   with gradient `z / sqrt(1 + |z|^2/c^2)` bounded by `c`.
//! * [`CostFunction::classical_quadratic`]: `phi*(z) = |z|^2 / 2`, the
//!   unbounded-speed limit.
//! * [`CostFunction::tabulated_radial`]: numerical conjugation of a sampled
//!   convex radial profile (see [`crate::tabulated`]).
//!
//! Structural guarantees, verified by the property suite in
//! [`crate::diagnostics`]: the gradient is odd and strictly monotone, the
//! Hessian symmetric positive definite, and for bounded costs the gradient
//! magnitude stays strictly below the ball radius (the propagation speed
//! bound) while approaching it at infinity.

use std::sync::Arc;

use crate::error::Result;
use crate::tabulated::{TabulatedCost, TabulatedProfile};

/// Symmetric `d x d` matrix, `d <= 3`, row-major with stride `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    d: usize,
    a: [f64; 9],
}

impl SymMatrix {
    fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        Self { d, a: [0.0; 9] }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Entry (i, j).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.d + j] = v;
    }

    /// Row-major entries (`d*d` values).
    pub fn entries(&self) -> &[f64] {
        &self.a[..self.d * self.d]
    }

    /// Eigenvalues in ascending order (closed forms, see [`crate::numeric`]).
    pub fn eigenvalues(&self) -> Vec<f64> {
        crate::numeric::symmetric_eigenvalues(self.entries(), self.d)
    }
}

/// A radial transport cost with dual-side evaluation in dimensions 1 to 3.
#[derive(Debug, Clone)]
pub enum CostFunction {
    /// Relativistic cost with light speed `c`.
    Relativistic { c: f64 },
    /// Quadratic cost `|x|^2 / 2` (no speed bound).
    ClassicalQuadratic,
    /// Tabulated convex radial profile, conjugated numerically.
    TabulatedRadial(Arc<TabulatedCost>),
}

impl CostFunction {
    /// Relativistic cost; requires `c > 0`.
    pub fn relativistic(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(crate::error::Error::Config(format!(
                "relativistic cost needs a positive finite speed, got {c}"
            )));
        }
        Ok(Self::Relativistic { c })
    }

    /// Quadratic cost.
    pub fn classical_quadratic() -> Self {
        Self::ClassicalQuadratic
    }

    /// Tabulated radial cost; validates and conjugates the profile.
    pub fn tabulated_radial(profile: TabulatedProfile) -> Result<Self> {
        Ok(Self::TabulatedRadial(Arc::new(TabulatedCost::new(profile)?)))
    }

    /// Largest attainable transport speed: the dual gradient magnitude stays
    /// strictly below this for finite arguments. Infinite for the quadratic
    /// cost.
    pub fn speed_bound(&self) -> f64 {
        match self {
            Self::Relativistic { c } => *c,
            Self::ClassicalQuadratic => f64::INFINITY,
            Self::TabulatedRadial(t) => t.radius(),
        }
    }

    /// Radius of the primal cost domain (same as the speed bound).
    pub fn domain_radius(&self) -> f64 {
        self.speed_bound()
    }

    /// Conjugate value `phi*(z)` for `z` of dimension 1 to 3.
    pub fn dual_value(&self, z: &[f64]) -> f64 {
        let y = norm(z);
        match self {
            Self::Relativistic { c } => {
                let t = y / c;
                c * c * ((1.0 + t * t).sqrt() - 1.0)
            }
            Self::ClassicalQuadratic => 0.5 * y * y,
            Self::TabulatedRadial(t) => t.dual_value_radial(y),
        }
    }

    /// Conjugate gradient `grad phi*(z)`: the velocity attained by the dual
    /// variable `z`. Odd by construction (radial evaluation).
    pub fn dual_grad(&self, z: &[f64]) -> Vec<f64> {
        let y = norm(z);
        match self {
            Self::Relativistic { c } => {
                let t = y / c;
                let s = (1.0 + t * t).sqrt();
                z.iter().map(|&zi| zi / s).collect()
            }
            Self::ClassicalQuadratic => z.to_vec(),
            Self::TabulatedRadial(t) => {
                if y == 0.0 {
                    return vec![0.0; z.len()];
                }
                let g = t.dual_grad_radial(y);
                z.iter().map(|&zi| zi * (g / y)).collect()
            }
        }
    }

    /// Conjugate Hessian `hess phi*(z)`: symmetric positive definite, with
    /// radial eigenvalue `g'(|z|)` and tangential eigenvalue `g(|z|)/|z|`.
    pub fn dual_hess(&self, z: &[f64]) -> SymMatrix {
        let d = z.len();
        let y = norm(z);
        let (radial, tangential) = match self {
            Self::Relativistic { c } => {
                let s = 1.0 + (y / c) * (y / c);
                (s.powf(-1.5), s.powf(-0.5))
            }
            Self::ClassicalQuadratic => (1.0, 1.0),
            Self::TabulatedRadial(t) => {
                if y < 1e-300 {
                    let k = t.curvature_at_origin();
                    (k, k)
                } else {
                    (t.dual_hess_radial(y), t.dual_grad_radial(y) / y)
                }
            }
        };
        let mut m = SymMatrix::zeros(d);
        if y == 0.0 {
            for i in 0..d {
                m.set(i, i, radial);
            }
            return m;
        }
        for i in 0..d {
            for j in 0..d {
                let dir = z[i] * z[j] / (y * y);
                let kron = if i == j { 1.0 } else { 0.0 };
                m.set(i, j, radial * dir + tangential * (kron - dir));
            }
        }
        m
    }

    /// Scalar conjugate value in one dimension.
    pub fn dual_value_1d(&self, z: f64) -> f64 {
        self.dual_value(&[z])
    }

    /// Scalar conjugate gradient in one dimension (hot path of the solver).
    #[inline]
    pub fn dual_grad_1d(&self, z: f64) -> f64 {
        match self {
            Self::Relativistic { c } => {
                let t = z / c;
                z / (1.0 + t * t).sqrt()
            }
            Self::ClassicalQuadratic => z,
            Self::TabulatedRadial(t) => {
                let y = z.abs();
                if y == 0.0 {
                    0.0
                } else {
                    t.dual_grad_radial(y) * z.signum()
                }
            }
        }
    }

    /// Scalar conjugate curvature in one dimension.
    #[inline]
    pub fn dual_hess_1d(&self, z: f64) -> f64 {
        match self {
            Self::Relativistic { c } => {
                let t = z / c;
                (1.0 + t * t).powf(-1.5)
            }
            Self::ClassicalQuadratic => 1.0,
            Self::TabulatedRadial(t) => {
                let y = z.abs();
                if y < 1e-300 {
                    t.curvature_at_origin()
                } else {
                    t.dual_hess_radial(y)
                }
            }
        }
    }

    /// Primal cost value at scalar displacement `x`; `+inf` outside the
    /// cost domain.
    pub fn primal_value(&self, x: f64) -> f64 {
        match self {
            Self::Relativistic { c } => {
                let t = x / c;
                if t.abs() > 1.0 {
                    f64::INFINITY
                } else {
                    c * c * (1.0 - (1.0 - t * t).max(0.0).sqrt())
                }
            }
            Self::ClassicalQuadratic => 0.5 * x * x,
            Self::TabulatedRadial(t) => t.primal_value(x),
        }
    }

    /// Primal derivative at `x` strictly inside the cost domain; diverges at
    /// the boundary.
    pub fn primal_grad(&self, x: f64) -> f64 {
        match self {
            Self::Relativistic { c } => {
                let t = x / c;
                let rem = 1.0 - t * t;
                if rem <= 0.0 {
                    f64::INFINITY * x.signum()
                } else {
                    x / rem.sqrt()
                }
            }
            Self::ClassicalQuadratic => x,
            Self::TabulatedRadial(t) => t.primal_grad(x),
        }
    }

    /// Primal second derivative at `x` strictly inside the cost domain.
    pub fn primal_hess(&self, x: f64) -> f64 {
        match self {
            Self::Relativistic { c } => {
                let t = x / c;
                let rem = 1.0 - t * t;
                if rem <= 0.0 {
                    f64::INFINITY
                } else {
                    rem.powf(-1.5)
                }
            }
            Self::ClassicalQuadratic => 1.0,
            Self::TabulatedRadial(t) => t.primal_hess(x),
        }
    }
}

fn norm(z: &[f64]) -> f64 {
    assert!(
        (1..=3).contains(&z.len()),
        "cost functions support dimensions 1 to 3, got {}",
        z.len()
    );
    match z.len() {
        1 => z[0].abs(),
        2 => z[0].hypot(z[1]),
        _ => (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt(),
    }
}

/// Summary of a seeded random audit of the structural properties of the
/// dual side over dimensions 1, 2 and 3: antisymmetry of the gradient,
/// monotonicity, agreement of the analytic gradient and Hessian with
/// central differences of the value, positivity of the Hessian spectrum,
/// the speed bound and its saturation at large arguments, and (for the
/// relativistic cost) agreement of the conjugate with a direct numerical
/// Legendre maximization of `z x - phi(x)`.
///
/// Defects are zero or tiny for a correct implementation; fields that do
/// not apply to the given cost (speed checks for unbounded costs, the
/// Legendre check for non-relativistic costs) are `None`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CostAudit {
    pub samples: usize,
    /// Largest `|grad(-z) + grad(z)|` component seen.
    pub max_oddness_defect: f64,
    /// Most negative `(grad z - grad y) . (z - y)`, clamped at zero.
    pub max_monotonicity_defect: f64,
    /// Worst relative mismatch of the gradient against central differences.
    pub max_gradient_fd_defect: f64,
    /// Worst relative mismatch of the Hessian against differenced gradients.
    pub max_hessian_fd_defect: f64,
    /// Smallest Hessian eigenvalue seen; positive for strictly convex duals.
    pub min_hessian_eigenvalue: f64,
    /// Largest `|grad| - speed_bound` (must stay nonpositive); `None` when
    /// the cost has no finite speed bound.
    pub max_speed_excess: Option<f64>,
    /// Gap `speed_bound - |grad(T e)|` at `T = 1e8` over sampled unit
    /// directions; `None` for unbounded costs.
    pub max_saturation_gap: Option<f64>,
    /// Worst relative disagreement between the closed-form conjugate and a
    /// ternary-search maximization of `z x - phi(x)`; `None` unless the
    /// cost is relativistic.
    pub max_legendre_defect: Option<f64>,
}

impl CostAudit {
    /// The largest defect across all measures that apply, with a Hessian
    /// eigenvalue at or below zero counting as an unbounded defect.
    pub fn worst_defect(&self) -> f64 {
        if self.min_hessian_eigenvalue <= 0.0 {
            return f64::INFINITY;
        }
        let mut worst = self
            .max_oddness_defect
            .max(self.max_monotonicity_defect)
            .max(self.max_gradient_fd_defect)
            .max(self.max_hessian_fd_defect);
        if let Some(excess) = self.max_speed_excess {
            worst = worst.max(excess);
        }
        if let Some(gap) = self.max_saturation_gap {
            worst = worst.max(gap);
        }
        if let Some(defect) = self.max_legendre_defect {
            worst = worst.max(defect);
        }
        worst
    }
}

/// Concave maximization of `x -> z * x - phi(x)` over the primal domain by
/// ternary search.
fn legendre_by_search(cost: &CostFunction, z: f64) -> f64 {
    let r = cost.domain_radius();
    let objective = |x: f64| z * x - cost.primal_value(x);
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if objective(a) < objective(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    objective(0.5 * (lo + hi))
}

/// Audits the structural properties of the dual side on `samples` seeded
/// random arguments with components in `[-10, 10]`, cycling through
/// dimensions 1, 2 and 3. Deterministic for a fixed cost, sample count and
/// seed. See [`CostAudit`] for the measures.
pub fn sample_audit(cost: &CostFunction, samples: usize, seed: u64) -> CostAudit {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bounded = cost.speed_bound().is_finite();
    let relativistic = matches!(cost, CostFunction::Relativistic { .. });
    let mut audit = CostAudit {
        samples,
        max_oddness_defect: 0.0,
        max_monotonicity_defect: 0.0,
        max_gradient_fd_defect: 0.0,
        max_hessian_fd_defect: 0.0,
        min_hessian_eigenvalue: f64::INFINITY,
        max_speed_excess: if bounded { Some(f64::NEG_INFINITY) } else { None },
        max_saturation_gap: if bounded { Some(0.0) } else { None },
        max_legendre_defect: if relativistic { Some(0.0) } else { None },
    };
    let h = 1e-5;
    for k in 0..samples {
        let d = 1 + k % 3;
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let g = cost.dual_grad(&z);
        let g_neg =
            cost.dual_grad(&z.iter().map(|v| -v).collect::<Vec<f64>>());
        for i in 0..d {
            audit.max_oddness_defect =
                audit.max_oddness_defect.max((g[i] + g_neg[i]).abs());
        }
        let gy = cost.dual_grad(&y);
        let dot: f64 = (0..d).map(|i| (g[i] - gy[i]) * (z[i] - y[i])).sum();
        audit.max_monotonicity_defect =
            audit.max_monotonicity_defect.max((-dot).max(0.0));
        let hess = cost.dual_hess(&z);
        for eig in hess.eigenvalues() {
            audit.min_hessian_eigenvalue =
                audit.min_hessian_eigenvalue.min(eig);
        }
        for j in 0..d {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let fd_g =
                (cost.dual_value(&zp) - cost.dual_value(&zm)) / (2.0 * h);
            audit.max_gradient_fd_defect = audit
                .max_gradient_fd_defect
                .max((fd_g - g[j]).abs() / (1.0 + g[j].abs()));
            let gp = cost.dual_grad(&zp);
            let gm = cost.dual_grad(&zm);
            for i in 0..d {
                let fd_h = (gp[i] - gm[i]) / (2.0 * h);
                let analytic = hess.get(i, j);
                audit.max_hessian_fd_defect = audit
                    .max_hessian_fd_defect
                    .max((fd_h - analytic).abs() / (1.0 + analytic.abs()));
            }
        }
        if bounded {
            let speed = norm(&g);
            let excess = audit.max_speed_excess.get_or_insert(f64::NEG_INFINITY);
            *excess = excess.max(speed - cost.speed_bound());
            // Saturation along the sampled direction at a huge argument.
            let zn = norm(&z);
            if zn > 1e-6 {
                let big: Vec<f64> = z.iter().map(|v| v / zn * 1e8).collect();
                let sat = cost.speed_bound() - norm(&cost.dual_grad(&big));
                let gap = audit.max_saturation_gap.get_or_insert(0.0);
                *gap = gap.max(sat);
            }
        }
        if relativistic && d == 1 {
            let direct = legendre_by_search(cost, z[0]);
            let closed = cost.dual_value_1d(z[0]);
            let defect = audit.max_legendre_defect.get_or_insert(0.0);
            *defect =
                defect.max((direct - closed).abs() / (1.0 + closed.abs()));
        }
    }
    audit
}
