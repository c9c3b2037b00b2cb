//! Least-squares helpers for tail regressions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    pub sse: f64,
}

/// Ordinary least squares y ≈ intercept + slope·x.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit {
        intercept,
        slope,
        r2,
        sse,
    }
}

/// Least squares y ≈ c0 + c1·g(x) for a fixed basis function g.
pub fn fit_basis<G: Fn(f64) -> f64>(x: &[f64], y: &[f64], g: G) -> LineFit {
    let gx: Vec<f64> = x.iter().map(|v| g(*v)).collect();
    fit_line(&gx, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthLaw {
    /// y ≈ c0 + c1 ln n
    Log,
    /// y ≈ c·n^p
    Power,
    /// y ≈ A − C n^{−q}, q > 0
    Bounded,
    /// y ≈ A + C / ln n
    InverseLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthLawFit {
    pub law: GrowthLaw,
    /// Log: (c0, c1). Power: (c, p). Bounded: (A, C). InverseLog: (A, C).
    pub coef: (f64, f64),
    /// Exponent q of the bounded law (0 otherwise).
    pub q: f64,
    /// Residual sum of squares measured on y itself.
    pub sse: f64,
}

impl GrowthLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        match self.law {
            GrowthLaw::Log => self.coef.0 + self.coef.1 * n.ln(),
            GrowthLaw::Power => self.coef.0 * n.powf(self.coef.1),
            GrowthLaw::Bounded => self.coef.0 - self.coef.1 * n.powf(-self.q),
            GrowthLaw::InverseLog => self.coef.0 + self.coef.1 / n.ln(),
        }
    }
}

fn sse_of(f: &GrowthLawFit, x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (f.predict(*a) - b).powi(2)).sum()
}

/// Least-squares fits of every law: log, power (when y > 0), the best
/// bounded exponent q on a grid, and inverse-log (when x > 1).
pub fn growth_law_candidates(x: &[f64], y: &[f64]) -> Vec<GrowthLawFit> {
    let mut cands = Vec::new();
    let l = fit_basis(x, y, f64::ln);
    cands.push(GrowthLawFit {
        law: GrowthLaw::Log,
        coef: (l.intercept, l.slope),
        q: 0.0,
        sse: 0.0,
    });
    if y.iter().all(|v| *v > 0.0) {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let p = fit_line(&lx, &ly);
        cands.push(GrowthLawFit {
            law: GrowthLaw::Power,
            coef: (p.intercept.exp(), p.slope),
            q: 0.0,
            sse: 0.0,
        });
    }
    let mut best: Option<GrowthLawFit> = None;
    for k in 1..=200 {
        let q = 0.02 * k as f64;
        let b = fit_basis(x, y, |v| v.powf(-q));
        let f = GrowthLawFit {
            law: GrowthLaw::Bounded,
            coef: (b.intercept, -b.slope),
            q,
            sse: b.sse,
        };
        if best.is_none_or(|g| f.sse < g.sse) {
            best = Some(f);
        }
    }
    cands.extend(best);
    if x.iter().all(|v| *v > 1.0) {
        let b = fit_basis(x, y, |v| 1.0 / v.ln());
        cands.push(GrowthLawFit {
            law: GrowthLaw::InverseLog,
            coef: (b.intercept, b.slope),
            q: 0.0,
            sse: 0.0,
        });
    }
    for c in cands.iter_mut() {
        c.sse = sse_of(c, x, y);
    }
    cands
}

/// The candidate law with the smallest SSE on y.
pub fn fit_growth_law(x: &[f64], y: &[f64]) -> GrowthLawFit {
    growth_law_candidates(x, y)
        .into_iter()
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
        .expect("log candidate always present")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_data_is_perfect_fit() {
        let f = fit_line(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]);
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r2, 1.0);
    }

    #[test]
    fn growth_law_selection() {
        let x: Vec<f64> = (0..20).map(|i| 10f64.powf(3.0 + i as f64 / 19.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 / std::f64::consts::PI * v.ln()).collect();
        assert_eq!(fit_growth_law(&x, &y).law, GrowthLaw::Log);
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 1.0 / v).collect();
        let f = fit_growth_law(&x, &y);
        assert_eq!(f.law, GrowthLaw::Bounded);
        assert!((f.coef.0 - 1.0).abs() < 1e-3 && (f.q - 1.0).abs() < 0.05);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(0.5)).collect();
        assert_eq!(fit_growth_law(&x, &y).law, GrowthLaw::Power);
    }

    #[test]
    fn basis_fit_log() {
        let x: Vec<f64> = (1..50).map(|i| i as f64 * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 + 2.0 * v.ln()).collect();
        let f = fit_basis(&x, &y, f64::ln);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 0.3).abs() < 1e-11);
    }
}
