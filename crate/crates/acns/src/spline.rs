//! Natural cubic spline interpolation in time with analytic derivatives.

use crate::error::{Error, Result};

/// Natural cubic interpolant of knot values; constant or linear for one
/// or two knots. Evaluation outside the knot range clamps to the ends.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    ts: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots (zero at the ends).
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(ts: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if ts.is_empty() || ts.len() != ys.len() {
            return Err(Error::Dimension(format!(
                "spline needs matching nonempty knots, got {} and {}",
                ts.len(),
                ys.len()
            )));
        }
        for w in ts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Precondition("spline knots must strictly increase".into()));
            }
        }
        let n = ts.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the natural-spline tridiagonal system.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut sub = vec![0.0; n];
            let mut sup = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = ts[i] - ts[i - 1];
                let h1 = ts[i + 1] - ts[i];
                sub[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                let upper = if i + 1 < n - 1 { sup[i] * m[i + 1] } else { 0.0 };
                m[i] = (rhs[i] - upper) / diag[i];
            }
        }
        Ok(Self { ts, ys, m })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.ts.len();
        match self.ts.partition_point(|&x| x <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if n == 1 {
            return self.ys[0];
        }
        let t = t.clamp(self.ts[0], self.ts[n - 1]);
        let i = self.segment(t);
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if n == 1 {
            return 0.0;
        }
        let t = t.clamp(self.ts[0], self.ts[n - 1]);
        let i = self.segment(t);
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}
