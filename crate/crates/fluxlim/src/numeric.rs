//! Small numerical utilities shared across modules: compensated summation,
//! symmetric eigenvalues in dimension <= 3, and monotone cubic interpolation.

/// Compensated (Neumaier) summation.
///
/// Mass bookkeeping and telescoping flux sums must not drift at the scale of
/// the conservation tolerances, so every reduction that feeds a conservation
/// statement goes through this instead of a naive fold.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Eigenvalues of a symmetric d x d matrix, d in {1, 2, 3}, ascending order.
///
/// Closed forms only: the quadratic formula for d = 2 and the trigonometric
/// solution of the characteristic cubic for d = 3. `a` is row-major with
/// stride d.
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    match d {
        1 => vec![a[0]],
        2 => {
            let (p, q, r) = (a[0], a[1], a[3]);
            let mean = 0.5 * (p + r);
            let disc = (0.5 * (p - r)).hypot(q);
            vec![mean - disc, mean + disc]
        }
        3 => {
            let (a11, a12, a13) = (a[0], a[1], a[2]);
            let (a22, a23, a33) = (a[4], a[5], a[8]);
            let q = (a11 + a22 + a33) / 3.0;
            let b11 = a11 - q;
            let b22 = a22 - q;
            let b33 = a33 - q;
            let p2 = b11 * b11 + b22 * b22 + b33 * b33
                + 2.0 * (a12 * a12 + a13 * a13 + a23 * a23);
            if p2 <= 0.0 {
                return vec![q, q, q];
            }
            let p = (p2 / 6.0).sqrt();
            // det(B) / p^3 with B = (A - q I) / p, clamped against rounding.
            let det_b = b11 * (b22 * b33 - a23 * a23) - a12 * (a12 * b33 - a23 * a13)
                + a13 * (a12 * a23 - b22 * a13);
            let r = (det_b / (2.0 * p * p * p)).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let e2 = 3.0 * q - e1 - e3;
            let mut eig = vec![e1, e2, e3];
            eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
            eig
        }
        _ => panic!("symmetric_eigenvalues supports d in 1..=3, got {d}"),
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson / PCHIP
/// derivative limiting). Preserves monotonicity of the data, is C^1, and the
/// derivative stays strictly positive for strictly increasing data away from
/// degenerate endpoints.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Knot derivatives after limiting.
    d: Vec<f64>,
    /// Cumulative integral of the interpolant from x[0] to each knot.
    cum: Vec<f64>,
}

impl MonotoneCubic {
    /// Build from strictly increasing abscissae and data values.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2, "need at least two knots");
        assert_eq!(n, y.len());
        let mut delta = vec![0.0; n - 1];
        for k in 0..n - 1 {
            let h = x[k + 1] - x[k];
            assert!(h > 0.0, "knots must be strictly increasing");
            delta[k] = (y[k + 1] - y[k]) / h;
        }
        let mut d = vec![0.0; n];
        // Interior: weighted harmonic mean of adjacent secants, zero across
        // sign changes or flat spots (Fritsch-Carlson region).
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] <= 0.0 {
                d[k] = 0.0;
            } else {
                let h0 = x[k] - x[k - 1];
                let h1 = x[k + 1] - x[k];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        // Endpoints: three-point one-sided estimate with the usual clamps;
        // for n == 2 fall back to the secant at both ends.
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            d[0] = Self::endpoint(x[1] - x[0], x[2] - x[1], delta[0], delta[1]);
            d[n - 1] = Self::endpoint(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], delta[n - 2], delta[n - 3]);
        }

        let mut cum = vec![0.0; n];
        for k in 0..n - 1 {
            let h = x[k + 1] - x[k];
            let cell = h * (0.5 * (y[k] + y[k + 1]) + h * (d[k] - d[k + 1]) / 12.0);
            cum[k + 1] = cum[k] + cell;
        }
        Self { x, y, d, cum }
    }

    fn endpoint(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
        let est = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if est * d0 <= 0.0 {
            0.0
        } else if d0 * d1 < 0.0 && est.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            est
        }
    }

    fn cell_of(&self, q: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&q).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.max(1).min(n - 1) - 1,
        }
    }

    /// Lower end of the abscissa range.
    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    /// Upper end of the abscissa range.
    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Interpolated value at `q` (must lie within the knot range).
    pub fn value(&self, q: f64) -> f64 {
        let k = self.cell_of(q);
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.y[k] * h00 + h * self.d[k] * h10 + self.y[k + 1] * h01 + h * self.d[k + 1] * h11
    }

    /// Derivative of the interpolant at `q`.
    pub fn derivative(&self, q: f64) -> f64 {
        let k = self.cell_of(q);
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let t2 = t * t;
        let h00 = (6.0 * t2 - 6.0 * t) / h;
        let h10 = 3.0 * t2 - 4.0 * t + 1.0;
        let h01 = (-6.0 * t2 + 6.0 * t) / h;
        let h11 = 3.0 * t2 - 2.0 * t;
        self.y[k] * h00 + self.d[k] * h10 + self.y[k + 1] * h01 + self.d[k + 1] * h11
    }

    /// Second derivative of the interpolant at `q` (jumps at knots).
    pub fn second_derivative(&self, q: f64) -> f64 {
        let k = self.cell_of(q);
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let h00 = (12.0 * t - 6.0) / (h * h);
        let h10 = (6.0 * t - 4.0) / h;
        let h01 = (-12.0 * t + 6.0) / (h * h);
        let h11 = (6.0 * t - 2.0) / h;
        self.y[k] * h00 + self.d[k] * h10 + self.y[k + 1] * h01 + self.d[k + 1] * h11
    }

    /// Integral of the interpolant from x_min to `q`.
    pub fn integral(&self, q: f64) -> f64 {
        let k = self.cell_of(q);
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let i00 = 0.5 * t4 - t3 + t;
        let i10 = 0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2;
        let i01 = -0.5 * t4 + t3;
        let i11 = 0.25 * t4 - t3 / 3.0;
        self.cum[k]
            + h * (self.y[k] * i00
                + h * self.d[k] * i10
                + self.y[k + 1] * i01
                + h * self.d[k + 1] * i11)
    }

    /// Knot derivative at the first knot.
    pub fn first_derivative_at_start(&self) -> f64 {
        self.d[0]
    }
}
