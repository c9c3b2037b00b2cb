//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use serde::{Deserialize, Serialize};

/// PCHIP interpolant. When every abscissa and ordinate is positive the
/// interpolation runs in log-log coordinates, which reproduces power laws
/// exactly; otherwise it is linear-coordinate PCHIP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    loglog: bool,
    x_raw: Vec<f64>,
}

impl Pchip {
    /// Panics unless `x` is strictly increasing with at least two points.
    pub fn new(x: &[f64], y: &[f64]) -> Pchip {
        assert!(x.len() >= 2 && x.len() == y.len(), "need >= 2 matching points");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "abscissae must increase");
        let loglog = x[0] > 0.0 && y.iter().all(|v| *v > 0.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = if loglog {
            (x.iter().map(|v| v.ln()).collect(), y.iter().map(|v| v.ln()).collect())
        } else {
            (x.to_vec(), y.to_vec())
        };
        let ds = slopes(&xs, &ys);
        Pchip {
            xs,
            ys,
            ds,
            loglog,
            x_raw: x.to_vec(),
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_raw[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x_raw[self.x_raw.len() - 1]
    }

    pub fn is_loglog(&self) -> bool {
        self.loglog
    }

    fn locate(&self, t: f64) -> usize {
        let k = self.xs.partition_point(|v| *v <= t);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    /// Value at `x`; `None` outside the sampled range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return None;
        }
        if let Ok(i) = self.x_raw.binary_search_by(|v| v.total_cmp(&x)) {
            let v = self.ys[i];
            return Some(if self.loglog { v.exp() } else { v });
        }
        let t = if self.loglog { x.ln() } else { x };
        let (v, _) = self.hermite(t);
        Some(if self.loglog { v.exp() } else { v })
    }

    /// First derivative at `x` in original coordinates.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return None;
        }
        let t = if self.loglog { x.ln() } else { x };
        let (v, dv) = self.hermite(t);
        Some(if self.loglog { v.exp() * dv / x } else { dv })
    }

    fn hermite(&self, t: f64) -> (f64, f64) {
        let k = self.locate(t);
        let h = self.xs[k + 1] - self.xs[k];
        let s = (t - self.xs[k]) / h;
        let (y0, y1, d0, d1) = (self.ys[k], self.ys[k + 1], self.ds[k], self.ds[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dv = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * h * d0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * h * d1)
            / h;
        (v, dv)
    }
}

fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0], del[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
