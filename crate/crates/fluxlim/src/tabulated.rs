//! Tabulated radial cost profiles and their numerical Legendre transform.
//!
//! A profile is a sampled convex function `phi(r)` on `[0, c]` with
//! `phi(0) = 0`, interpreted as the radial part of a cost supported on the
//! ball of radius `c`. Two conjugation routes are provided:
//!
//! * [`numerical_conjugate`]: direct supremum over the samples with local
//!   quadratic refinement. Slow but assumption-free; kept as the oracle.
//! * [`TabulatedCost`]: construction-time inversion of the secant-slope
//!   staircase, giving the dual gradient on a logarithmic grid of dual radii.
//!   A monotone cubic interpolant of that gradient (integrated for values,
//!   differentiated for curvatures) serves queries in O(log n), and a
//!   hyperbolic continuation covers dual radii beyond the largest sampled
//!   slope so the gradient magnitude tends to `c` strictly from below.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::MonotoneCubic;

/// Tolerance for convexity validation of profile secant slopes.
const CONVEXITY_TOL: f64 = 1e-10;

/// Number of logarithmically spaced dual radii in the conjugate table.
const DUAL_KNOTS: usize = 2048;

/// Sampled radial cost profile on `[0, c]`.
#[derive(Debug, Clone)]
pub struct TabulatedProfile {
    r: Vec<f64>,
    phi: Vec<f64>,
}

impl TabulatedProfile {
    /// Validate samples: strictly increasing radii starting at 0, values
    /// starting at 0, nondecreasing, and convex within [`CONVEXITY_TOL`].
    pub fn new(r: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if r.len() != phi.len() || r.len() < 3 {
            return Err(Error::InvalidProfile {
                reason: format!("need >= 3 samples with matching radii, got {}", r.len()),
            });
        }
        if r[0] != 0.0 || phi[0] != 0.0 {
            return Err(Error::InvalidProfile {
                reason: "profile must start at (r, phi) = (0, 0)".into(),
            });
        }
        for i in 1..r.len() {
            if !r[i].is_finite() || !phi[i].is_finite() {
                return Err(Error::InvalidProfile {
                    reason: format!("non-finite sample at index {i}"),
                });
            }
            if r[i] <= r[i - 1] {
                return Err(Error::InvalidProfile {
                    reason: format!("radii must be strictly increasing at index {i}"),
                });
            }
            if phi[i] < phi[i - 1] {
                return Err(Error::InvalidProfile {
                    reason: format!("profile must be nondecreasing at index {i}"),
                });
            }
        }
        // Convexity: secant slopes must not decrease beyond tolerance.
        let mut prev_slope = (phi[1] - phi[0]) / (r[1] - r[0]);
        for i in 1..r.len() - 1 {
            let slope = (phi[i + 1] - phi[i]) / (r[i + 1] - r[i]);
            if slope - prev_slope < -CONVEXITY_TOL {
                return Err(Error::ProfileNotConvex { r: r[i] });
            }
            prev_slope = slope;
        }
        Ok(Self { r, phi })
    }

    /// Sample the relativistic profile `c^2 (1 - sqrt(1 - r^2/c^2))` with
    /// `n` uniform samples on `[0, c]`.
    pub fn relativistic(c: f64, n: usize) -> Self {
        let r: Vec<f64> = (0..n).map(|i| c * i as f64 / (n - 1) as f64).collect();
        let phi: Vec<f64> = r
            .iter()
            .map(|&x| {
                let t = (x / c).min(1.0);
                c * c * (1.0 - (1.0 - t * t).max(0.0).sqrt())
            })
            .collect();
        Self::new(r, phi).expect("relativistic profile is convex")
    }

    /// Ball radius `c` (largest sampled radius).
    pub fn radius(&self) -> f64 {
        *self.r.last().unwrap()
    }

    /// Sampled radii.
    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    /// Sampled values.
    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    /// Write as CSV with header `r,phi`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,phi")?;
        for (r, phi) in self.r.iter().zip(&self.phi) {
            writeln!(w, "{r:.16e},{phi:.16e}")?;
        }
        Ok(())
    }

    /// Read a profile from CSV with header `r,phi`.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidProfile {
                reason: "profile csv is empty".into(),
            })??;
        if header.trim() != "r,phi" {
            return Err(Error::InvalidProfile {
                reason: format!("profile csv must start with header 'r,phi', got '{header}'"),
            });
        }
        let mut r = Vec::new();
        let mut phi = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let rv: f64 = parts
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|e| Error::InvalidProfile {
                    reason: format!("bad r value in row {}: {e}", row + 2),
                })?;
            let pv: f64 = parts
                .next()
                .ok_or_else(|| Error::InvalidProfile {
                    reason: format!("missing phi value in row {}", row + 2),
                })?
                .trim()
                .parse()
                .map_err(|e| Error::InvalidProfile {
                    reason: format!("bad phi value in row {}: {e}", row + 2),
                })?;
            r.push(rv);
            phi.push(pv);
        }
        Self::new(r, phi)
    }

    /// Read a profile from a CSV file; see [`TabulatedProfile::read_csv`].
    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Direct numerical Legendre transform `sup_r (y r - phi(r))` at dual radius
/// `y >= 0`: supremum over the samples, then a local quadratic refinement
/// through the three samples bracketing the discrete maximizer. Exact for
/// quadratic profiles up to rounding; `O(h^3)` otherwise.
pub fn numerical_conjugate(profile: &TabulatedProfile, y: f64) -> f64 {
    assert!(y >= 0.0, "dual radius must be nonnegative");
    let (r, phi) = (&profile.r, &profile.phi);
    let n = r.len();
    let mut best = 0.0;
    let mut best_k = 0usize;
    for k in 0..n {
        let v = y * r[k] - phi[k];
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if best_k == 0 || best_k == n - 1 {
        return best;
    }
    // Parabola through the bracketing triple in Newton form.
    let (x1, x2, x3) = (r[best_k - 1], r[best_k], r[best_k + 1]);
    let (y1, y2, y3) = (
        y * x1 - phi[best_k - 1],
        best,
        y * x3 - phi[best_k + 1],
    );
    let d1 = (y2 - y1) / (x2 - x1);
    let d2 = (y3 - y2) / (x3 - x2);
    let c2 = (d2 - d1) / (x3 - x1);
    if c2 >= 0.0 {
        return best;
    }
    let vertex = (0.5 * (x1 + x2) - d1 / (2.0 * c2)).clamp(x1, x3);
    let refined = y1 + d1 * (vertex - x1) + c2 * (vertex - x1) * (vertex - x2);
    refined.max(best)
}

/// Precomputed dual-side representation of a tabulated radial cost.
///
/// The radial dual gradient `g(y) = argmax_r (y r - phi(r))` is obtained by
/// inverting the strictly increasing secant-slope staircase of the profile
/// (slopes at cell midpoints), sampled on a logarithmic grid of dual radii
/// and interpolated monotonically. Dual values integrate `g`; radial
/// curvature differentiates it. Beyond the largest sampled slope `Y`, the
/// hyperbolic tail `g(y) = c y / sqrt(y^2 + s^2)` continues the gradient
/// with `s` matched so `g` is continuous at `Y`; the tail is strictly
/// increasing with limit `c`, so the speed bound holds for every finite
/// dual radius.
#[derive(Debug)]
pub struct TabulatedCost {
    radius: f64,
    /// Monotone interpolant of the radial dual gradient on [0, y_max].
    g: MonotoneCubic,
    y_max: f64,
    /// Tail scale s^2 in g(y) = c y / sqrt(y^2 + s^2) for y > y_max.
    tail_s2: f64,
    /// Conjugate value at y_max (integral of g over the table).
    f_at_y_max: f64,
    /// Primal interpolant for the cost itself (used by variational steps).
    primal: MonotoneCubic,
}

impl TabulatedCost {
    /// Build the dual table. Rejects profiles whose conjugate would lose
    /// strict convexity on the tabulation grid (interior affine segments of
    /// the profile produce repeated slopes).
    pub fn new(profile: TabulatedProfile) -> Result<Self> {
        let (r, phi) = (&profile.r, &profile.phi);
        let n = r.len();
        let radius = profile.radius();
        // Secant slopes at cell midpoints form the graph of phi' and must be
        // strictly increasing for the conjugate to be strictly convex.
        let mut slopes = Vec::with_capacity(n - 1);
        let mut mids = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            slopes.push((phi[k + 1] - phi[k]) / (r[k + 1] - r[k]));
            mids.push(0.5 * (r[k] + r[k + 1]));
        }
        let slope_scale = slopes.last().unwrap().abs().max(1.0);
        for k in 1..slopes.len() {
            if slopes[k] - slopes[k - 1] <= CONVEXITY_TOL * slope_scale {
                return Err(Error::ConjugateNotStrictlyConvex { slope: slopes[k] });
            }
        }
        if slopes[0] < 0.0 {
            return Err(Error::InvalidProfile {
                reason: "profile slope must be nonnegative near the origin".into(),
            });
        }

        // Piecewise-linear inverse of the slope staircase through (0, 0):
        // g(y) = r solving phi'(r) = y.
        let invert = |y: f64| -> f64 {
            if y <= 0.0 {
                return 0.0;
            }
            if y <= slopes[0] {
                return y * mids[0] / slopes[0].max(f64::MIN_POSITIVE);
            }
            let k = slopes.partition_point(|&s| s < y);
            if k >= slopes.len() {
                return mids[mids.len() - 1];
            }
            let (s0, s1) = (slopes[k - 1], slopes[k]);
            let (m0, m1) = (mids[k - 1], mids[k]);
            m0 + (y - s0) / (s1 - s0) * (m1 - m0)
        };

        let y_max = *slopes.last().unwrap();
        let y_min = y_max * 1e-8;
        let ratio = (y_max / y_min).powf(1.0 / (DUAL_KNOTS as f64 - 1.0));
        let mut y_knots = Vec::with_capacity(DUAL_KNOTS + 1);
        let mut g_knots = Vec::with_capacity(DUAL_KNOTS + 1);
        y_knots.push(0.0);
        g_knots.push(0.0);
        let mut y = y_min;
        for k in 0..DUAL_KNOTS {
            let yk = if k + 1 == DUAL_KNOTS { y_max } else { y };
            y_knots.push(yk);
            g_knots.push(invert(yk));
            y *= ratio;
        }
        let g = MonotoneCubic::new(y_knots, g_knots);
        let g_at_y_max = invert(y_max);
        let tail_s2 = y_max * y_max * (radius * radius - g_at_y_max * g_at_y_max)
            / (g_at_y_max * g_at_y_max);
        let f_at_y_max = g.integral(y_max);
        let primal = MonotoneCubic::new(r.clone(), phi.clone());
        Ok(Self {
            radius,
            g,
            y_max,
            tail_s2,
            f_at_y_max,
            primal,
        })
    }

    /// Ball radius `c` of the primal cost (also the dual speed bound).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Conjugate value at dual radius `y >= 0`.
    pub fn dual_value_radial(&self, y: f64) -> f64 {
        if y <= self.y_max {
            self.g.integral(y)
        } else {
            let c = self.radius;
            self.f_at_y_max
                + c * ((y * y + self.tail_s2).sqrt()
                    - (self.y_max * self.y_max + self.tail_s2).sqrt())
        }
    }

    /// Dual gradient magnitude at dual radius `y >= 0`; strictly below the
    /// ball radius for finite `y`.
    pub fn dual_grad_radial(&self, y: f64) -> f64 {
        if y <= self.y_max {
            self.g.value(y)
        } else {
            self.radius * y / (y * y + self.tail_s2).sqrt()
        }
    }

    /// Radial curvature `g'(y)` of the conjugate.
    pub fn dual_hess_radial(&self, y: f64) -> f64 {
        if y <= self.y_max {
            self.g.derivative(y)
        } else {
            let d2 = y * y + self.tail_s2;
            self.radius * self.tail_s2 / (d2 * d2.sqrt())
        }
    }

    /// Limit of `g(y)/y` at `y = 0` (isotropic curvature at the origin).
    pub fn curvature_at_origin(&self) -> f64 {
        self.g.first_derivative_at_start()
    }

    /// Primal cost value at displacement `x` (`+inf` beyond the ball).
    pub fn primal_value(&self, x: f64) -> f64 {
        let a = x.abs();
        if a > self.radius {
            f64::INFINITY
        } else {
            self.primal.value(a)
        }
    }

    /// Primal derivative at `x` strictly inside the ball.
    pub fn primal_grad(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= self.radius {
            f64::INFINITY * x.signum()
        } else {
            self.primal.derivative(a) * x.signum()
        }
    }

    /// Primal second derivative at `x` strictly inside the ball.
    pub fn primal_hess(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= self.radius {
            f64::INFINITY
        } else {
            self.primal.second_derivative(a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_profile(c: f64, n: usize) -> TabulatedProfile {
        let r: Vec<f64> = (0..n).map(|i| c * i as f64 / (n - 1) as f64).collect();
        let phi: Vec<f64> = r.iter().map(|&x| 0.5 * x * x).collect();
        TabulatedProfile::new(r, phi).unwrap()
    }

    #[test]
    fn conjugate_of_relativistic_profile_matches_closed_form() {
        // sup_r (r - (1 - sqrt(1 - r^2))) = sqrt(2) - 1 at r = 1/sqrt(2).
        let p = TabulatedProfile::relativistic(1.0, 10_000);
        let got = numerical_conjugate(&p, 1.0);
        assert!(
            (got - (2.0f64.sqrt() - 1.0)).abs() < 1e-6,
            "got {got}, want {}",
            2.0f64.sqrt() - 1.0
        );
    }

    #[test]
    fn conjugate_at_zero_dual_radius_vanishes() {
        let p = TabulatedProfile::relativistic(1.0, 512);
        assert_eq!(numerical_conjugate(&p, 0.0), 0.0);
        let q = quadratic_profile(10.0, 512);
        assert_eq!(numerical_conjugate(&q, 0.0), 0.0);
    }

    #[test]
    fn conjugate_of_quadratic_profile_is_exact() {
        // sup_r (r - r^2/2) = 1/2 at r = 1; refinement makes this exact.
        let p = quadratic_profile(10.0, 10_000);
        let got = numerical_conjugate(&p, 1.0);
        assert!((got - 0.5).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn non_convex_profile_is_rejected() {
        let r = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let phi = vec![0.0, 0.4, 0.5, 0.52, 1.0];
        let err = TabulatedProfile::new(r, phi).unwrap_err();
        assert!(err.to_string().contains("profile not convex"), "{err}");
    }

    #[test]
    fn affine_profile_segment_is_rejected_at_table_build() {
        // Convex but with two equal consecutive slopes: the conjugate picks
        // up an affine segment and must be refused.
        let r = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let phi = vec![0.0, 0.5, 1.5, 2.5, 4.5];
        let profile = TabulatedProfile::new(r, phi).unwrap();
        let err = TabulatedCost::new(profile).unwrap_err();
        assert!(
            err.to_string().contains("conjugate not strictly convex"),
            "{err}"
        );
    }

    #[test]
    fn table_matches_direct_conjugate_on_relativistic_profile() {
        let p = TabulatedProfile::relativistic(1.0, 10_000);
        let cost = TabulatedCost::new(p.clone()).unwrap();
        for &y in &[1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let direct = numerical_conjugate(&p, y);
            let table = cost.dual_value_radial(y);
            assert!(
                (direct - table).abs() < 2e-5,
                "y = {y}: direct {direct} vs table {table}"
            );
            // Closed form for the dual gradient magnitude.
            let exact = y / (1.0 + y * y).sqrt();
            let got = cost.dual_grad_radial(y);
            assert!((got - exact).abs() < 2e-5, "y = {y}: grad {got} vs {exact}");
        }
    }

    #[test]
    fn tail_continues_gradient_towards_the_radius() {
        let p = TabulatedProfile::relativistic(2.0, 4_000);
        let cost = TabulatedCost::new(p).unwrap();
        let mut prev = 0.0;
        for &y in &[1.0, 10.0, 1e3, 1e5, 1e6] {
            let g = cost.dual_grad_radial(y);
            assert!(g > prev, "gradient must increase");
            assert!(g < 2.0, "speed bound violated at y = {y}");
            prev = g;
        }
        assert!(2.0 - prev < 1e-5, "gradient should approach the radius");
    }

    #[test]
    fn quadratic_profile_cost_matches_identity_gradient_in_table_range() {
        // g(y) = y for phi = r^2/2 while y stays below the largest slope.
        let p = quadratic_profile(10.0, 4_000);
        let cost = TabulatedCost::new(p).unwrap();
        for &y in &[0.01, 0.1, 1.0, 5.0] {
            let g = cost.dual_grad_radial(y);
            assert!((g - y).abs() < 1e-4, "y = {y}: got {g}");
        }
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = TabulatedProfile::relativistic(1.5, 64);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = TabulatedProfile::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(p.radii(), back.radii());
        assert_eq!(p.values(), back.values());
    }

    #[test]
    fn profile_rejects_malformed_shapes() {
        assert!(TabulatedProfile::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(TabulatedProfile::new(vec![0.1, 0.5, 1.0], vec![0.0, 0.1, 0.3]).is_err());
        assert!(TabulatedProfile::new(vec![0.0, 0.5, 0.5], vec![0.0, 0.1, 0.3]).is_err());
        assert!(TabulatedProfile::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.3, 0.1]).is_err());
    }
}
