//! One-dimensional symmetrization φ̃(x) = exp ∫_0^x (φ′+2b)/φ and the
//! half-line test ∫ 1/φ̃ < ∞ ⇒ not recurrent.

use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::criteria::{merge, test_recurrence_volume, Classification, LimitRules, Verdict};
use crate::error::{QuadError, Scale1dError};
use crate::model::ModelSpec;
use crate::quadrature::{integrate, integrate_points, QuadConfig};
use crate::volume_growth::{build_profiles, compute_a, VolumeConfig};

type Field = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Node spacing of the cumulative table of ln φ̃.
const STEP: f64 = 0.5;

/// Evaluator for φ̃. ln φ̃ is tabulated at multiples of 0.5 on demand; the
/// table only grows, under a lock, so concurrent reads are safe.
pub struct PhiTilde {
    g: Field,
    exceptions: Vec<f64>,
    quad: QuadConfig,
    pos: RwLock<Vec<f64>>,
    neg: RwLock<Vec<f64>>,
}

impl std::fmt::Debug for PhiTilde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhiTilde").field("exceptions", &self.exceptions).finish()
    }
}

/// Builds φ̃ from φ, φ′ (classical derivative off `exceptions`) and b.
pub fn symmetrize_density<P, D>(phi: P, dphi: D, b: f64, exceptions: &[f64]) -> PhiTilde
where
    P: Fn(f64) -> f64 + Send + Sync + 'static,
    D: Fn(f64) -> f64 + Send + Sync + 'static,
{
    PhiTilde::from_log_derivative(move |x| (dphi(x) + 2.0 * b) / phi(x), exceptions)
}

impl PhiTilde {
    /// φ̃ = exp ∫_0^x g for an arbitrary log-derivative g.
    pub fn from_log_derivative<G: Fn(f64) -> f64 + Send + Sync + 'static>(g: G, exceptions: &[f64]) -> PhiTilde {
        let mut ex = exceptions.to_vec();
        ex.sort_by(f64::total_cmp);
        ex.dedup();
        PhiTilde {
            g: Arc::new(g),
            exceptions: ex,
            quad: QuadConfig {
                rel_tol: 1e-12,
                abs_tol: 1e-14,
                ..Default::default()
            },
            pos: RwLock::new(vec![0.0]),
            neg: RwLock::new(vec![0.0]),
        }
    }

    /// (φ′+2b)/φ at x.
    pub fn log_derivative(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    /// ∫_a^b g with exception points as breakpoints.
    fn segment(&self, a: f64, b: f64) -> Result<f64, Scale1dError> {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi, sgn) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut pts = vec![lo];
        pts.extend(self.exceptions.iter().copied().filter(|e| *e > lo && *e < hi));
        pts.push(hi);
        let g = &self.g;
        match integrate_points(|t| g(t), &pts, &self.quad) {
            Ok(r) if r.value.is_finite() => Ok(sgn * r.value),
            _ => Err(Scale1dError::NonIntegrableLogDerivative(lo)),
        }
    }

    fn table(&self, k: usize, positive: bool) -> Result<f64, Scale1dError> {
        let lock = if positive { &self.pos } else { &self.neg };
        if let Some(v) = lock.read().expect("table lock").get(k) {
            return Ok(*v);
        }
        let mut t = lock.write().expect("table lock");
        let s = if positive { 1.0 } else { -1.0 };
        while t.len() <= k {
            let j = t.len();
            let a = s * STEP * (j - 1) as f64;
            let b = s * STEP * j as f64;
            let v = t[j - 1] + self.segment(a, b)?;
            t.push(v);
        }
        Ok(t[k])
    }

    /// ln φ̃(x); exactly 0 at the origin.
    pub fn ln_eval(&self, x: f64) -> Result<f64, Scale1dError> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let k = (x.abs() / STEP).floor() as usize;
        let node = if x > 0.0 { STEP * k as f64 } else { -STEP * k as f64 };
        Ok(self.table(k, x > 0.0)? + self.segment(node, x)?)
    }

    pub fn eval(&self, x: f64) -> Result<f64, Scale1dError> {
        Ok(self.ln_eval(x)?.exp())
    }

    /// CSV with header `x,phi_tilde`.
    pub fn to_csv(&self, xs: &[f64]) -> Result<String, Scale1dError> {
        let mut s = String::from("x,phi_tilde\n");
        for x in xs {
            s.push_str(&format!("{:e},{:e}\n", x, self.eval(*x)?));
        }
        Ok(s)
    }

    /// ∫ 1/φ̃ between 0 and `x_end` along the half-line with sign `s`.
    fn inverse_integral(&self, s: f64, x_end: f64) -> Result<f64, Scale1dError> {
        let cfg = QuadConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            ..Default::default()
        };
        let n = (x_end / STEP).ceil() as usize;
        let mut parts = Vec::with_capacity(n);
        for k in 0..n {
            let a = STEP * k as f64;
            let b = (STEP * (k + 1) as f64).min(x_end);
            let base = self.table(k, s > 0.0)?;
            if base > 745.0 {
                // e^{-base} underflows; the remainder is below any tolerance
                break;
            }
            let mut err = None;
            let r = integrate(
                |t| match self.segment(s * a, s * t) {
                    Ok(v) => (-(base + v)).exp(),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                a,
                b,
                &cfg,
            );
            if let Some(e) = err {
                return Err(e);
            }
            parts.push(r.map_err(|e| match e {
                QuadError::NonFinite => Scale1dError::NonIntegrableLogDerivative(s * a),
                _ => Scale1dError::TailUnresolved,
            })?.value);
        }
        Ok(crate::quadrature::tree_sum(&parts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatus {
    Convergent,
    Divergent,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailLaw1d {
    /// 1/φ̃ ≤ C e^{−λx}
    Exponential,
    /// 1/φ̃ ≤ C x^{−p}, p > 1
    Power,
    /// 1/φ̃ ≥ c/x
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfLine {
    pub status: TailStatus,
    /// ∫ 1/φ̃ over the half-line; `None` when divergent or unresolved.
    pub value: Option<f64>,
    /// Cutoff X where the tail was certified.
    pub cutoff: f64,
    pub law: Option<TailLaw1d>,
    /// Rate λ, exponent p, or constant c of the certified law.
    pub law_param: Option<f64>,
    /// Upper bound for ∫_X^∞ 1/φ̃ when convergent.
    pub tail_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scale1DResult {
    pub i_plus: HalfLine,
    pub i_minus: HalfLine,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailConfig {
    pub x_start: f64,
    pub x_max: f64,
    /// Allowed relative drift of the certified rate across the window.
    pub validation: f64,
    /// Stop once the tail bound is below this fraction of the head integral.
    pub rel_tol: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            x_start: 1.0,
            x_max: 1e4,
            validation: 0.05,
            rel_tol: 1e-10,
        }
    }
}

const WINDOW: usize = 17;

fn half_line(pt: &PhiTilde, s: f64, cfg: &TailConfig) -> Result<HalfLine, Scale1dError> {
    let mut x = cfg.x_start;
    let mut pending: Option<(f64, TailLaw1d, f64, f64)> = None;
    while x <= cfg.x_max {
        // local decay rate κ(t) = −(ln 1/φ̃(st))′ and power P(t) = tκ(t) on [X/2, X]
        let ts: Vec<f64> = (0..WINDOW).map(|i| x / 2.0 * 2f64.powf(i as f64 / (WINDOW - 1) as f64)).collect();
        let kappa: Vec<f64> = ts.iter().map(|t| s * pt.log_derivative(s * t)).collect();
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Scale1dError::NonIntegrableLogDerivative(s * x));
        }
        let p: Vec<f64> = ts.iter().zip(&kappa).map(|(t, k)| t * k).collect();
        let q = WINDOW / 4;
        let first_max = |v: &[f64]| v[..=q].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let last_min = |v: &[f64]| v[WINDOW - 1 - q..].iter().copied().fold(f64::INFINITY, f64::min);
        let last_max = |v: &[f64]| v[WINDOW - 1 - q..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vmin = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let vmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ln_f_end = -pt.ln_eval(s * x)?;
        let v = 1.0 - cfg.validation;

        let exp_ok = vmin(&kappa) > 0.0 && last_min(&kappa) >= v * first_max(&kappa);
        let pow_ok = vmin(&p) > 1.0 && last_min(&p) >= v * first_max(&p);
        let div_ok = vmax(&p) <= 1.0 && last_max(&p) <= (1.0 + cfg.validation) * first_max(&p).max(0.0) + 1e-12;

        if div_ok {
            let c = ts.iter().map(|t| t * (-pt.ln_eval(s * t).unwrap_or(f64::INFINITY)).exp()).fold(f64::INFINITY, f64::min);
            if c > 0.0 {
                return Ok(HalfLine {
                    status: TailStatus::Divergent,
                    value: None,
                    cutoff: x,
                    law: Some(TailLaw1d::Harmonic),
                    law_param: Some(c),
                    tail_bound: None,
                });
            }
        }
        if exp_ok || pow_ok {
            let (law, param, ln_tail) = if exp_ok {
                let lam = v * vmin(&kappa);
                (TailLaw1d::Exponential, lam, ln_f_end - lam.ln())
            } else {
                let pm = vmin(&p);
                (TailLaw1d::Power, pm, ln_f_end + x.ln() - (pm - 1.0).ln())
            };
            pending = Some((x, law, param, ln_tail.exp()));
            let head = pt.inverse_integral(s, x)?;
            let tail = ln_tail.exp();
            if tail <= cfg.rel_tol * head || x * 2.0 > cfg.x_max {
                return Ok(HalfLine {
                    status: TailStatus::Convergent,
                    value: Some(head + tail_estimate(law, ln_f_end, &kappa, x, &p)),
                    cutoff: x,
                    law: Some(law),
                    law_param: Some(param),
                    tail_bound: Some(tail),
                });
            }
        }
        x *= 2.0;
    }
    if let Some((xc, law, param, tail)) = pending {
        let head = pt.inverse_integral(s, xc)?;
        return Ok(HalfLine {
            status: TailStatus::Convergent,
            value: Some(head + tail),
            cutoff: xc,
            law: Some(law),
            law_param: Some(param),
            tail_bound: Some(tail),
        });
    }
    Ok(HalfLine {
        status: TailStatus::Unresolved,
        value: None,
        cutoff: cfg.x_max,
        law: None,
        law_param: None,
        tail_bound: None,
    })
}

/// Point estimate of ∫_X^∞ 1/φ̃ from the local law at X.
fn tail_estimate(law: TailLaw1d, ln_f_end: f64, kappa: &[f64], x: f64, p: &[f64]) -> f64 {
    match law {
        TailLaw1d::Exponential => (ln_f_end - kappa[kappa.len() - 1].ln()).exp(),
        _ => (ln_f_end + x.ln() - (p[p.len() - 1] - 1.0).ln()).exp(),
    }
}

/// Decides convergence of ∫_0^{±∞} 1/φ̃. NotRecurrent if either half-line
/// converges; Inconclusive if both diverge or one diverges and the other is
/// unresolved; TailUnresolved if neither side is certified either way.
pub fn test_not_recurrent_1d(pt: &PhiTilde, cfg: &TailConfig) -> Result<Scale1DResult, Scale1dError> {
    let i_plus = half_line(pt, 1.0, cfg)?;
    let i_minus = half_line(pt, -1.0, cfg)?;
    let conv = |h: &HalfLine| h.status == TailStatus::Convergent;
    let verdict = if conv(&i_plus) || conv(&i_minus) {
        Verdict::NotRecurrent
    } else if i_plus.status == TailStatus::Unresolved && i_minus.status == TailStatus::Unresolved {
        return Err(Scale1dError::TailUnresolved);
    } else {
        Verdict::Inconclusive
    };
    Ok(Scale1DResult {
        i_plus,
        i_minus,
        verdict,
    })
}

/// The constant b with B = b/φ in the normalization where φ̃ uses (φ′+2b)/φ:
/// for a constant diffusion coefficient a this is (φB)/(2a).
pub fn drift_constant(model: &ModelSpec) -> Result<f64, Scale1dError> {
    if model.dim != 1 {
        return Err(Scale1dError::NotApplicable(format!("dimension is {}", model.dim)));
    }
    let a = model.a[0]
        .as_const()
        .ok_or_else(|| Scale1dError::NotApplicable("diffusion coefficient is not constant".into()))?;
    let probes = [-7.3, -2.2, -0.6, 0.0, 0.45, 1.7, 3.9, 8.1];
    let vals: Vec<f64> = probes.iter().map(|x| model.flux[0].eval(&[*x])).collect();
    let f0 = vals[0];
    if vals.iter().any(|v| !v.is_finite() || (v - f0).abs() > 1e-12 * (1.0 + f0.abs())) {
        return Err(Scale1dError::NotApplicable("φ·B is not constant".into()));
    }
    Ok(f0 / (2.0 * a))
}

pub fn phi_tilde_for(model: &ModelSpec) -> Result<PhiTilde, Scale1dError> {
    let b = drift_constant(model)?;
    let (phi, dphi) = (model.phi.clone(), model.grad_phi[0].clone());
    Ok(symmetrize_density(
        move |x| phi.eval(&[x]),
        move |x| dphi.eval(&[x]),
        b,
        &model.config.kinks,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classify1dConfig {
    pub r_max: f64,
    pub grid: usize,
    pub irreducible: bool,
}

impl Default for Classify1dConfig {
    fn default() -> Self {
        Classify1dConfig {
            r_max: 1e4,
            grid: 121,
            irreducible: false,
        }
    }
}

/// The 1-d half-line test as a Classification.
pub fn scale_classification(model: &ModelSpec, tail: &TailConfig) -> Result<(Classification, Scale1DResult), Scale1dError> {
    let b = drift_constant(model)?;
    let pt = phi_tilde_for(model)?;
    let res = test_not_recurrent_1d(&pt, tail)?;
    let mut c = Classification {
        verdict: res.verdict,
        criterion_id: "scale_1d".into(),
        diagnostics: Default::default(),
        assumptions: vec!["tails of ∫1/φ̃ certified from local rates on a finite window".into()],
    };
    let js = |h: &HalfLine| serde_json::to_value(h).unwrap_or_default();
    c.diagnostics.insert("b".into(), serde_json::json!(b));
    c.diagnostics.insert("i_plus".into(), js(&res.i_plus));
    c.diagnostics.insert("i_minus".into(), js(&res.i_minus));
    Ok((c, res))
}

/// Runs the half-line test and the volume test and merges them.
pub fn classify_1d(model: &ModelSpec, cfg: &Classify1dConfig) -> Result<Classification, Scale1dError> {
    let (scale, _) = scale_classification(model, &TailConfig::default())?;
    let p = build_profiles(model, cfg.r_max, cfg.grid, &VolumeConfig::default())?;
    let ns: Vec<f64> = p.v.radii.iter().copied().filter(|r| *r >= 1.0).collect();
    let a = compute_a(&p.v, &ns, &QuadConfig::default())?;
    let irreducible = cfg.irreducible || model.flags().irreducible;
    let vol = test_recurrence_volume(&p.v2, &a, irreducible, &LimitRules::default())?;
    Ok(merge(&[scale, vol])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn exp_generic_half() -> PhiTilde {
        symmetrize_density(
            |x: f64| (-x.abs()).exp(),
            |x: f64| -x.signum() * (-x.abs()).exp(),
            0.5,
            &[0.0],
        )
    }

    #[test]
    fn exp_generic_closed_form() {
        let pt = exp_generic_half();
        assert_eq!(pt.eval(0.0).unwrap(), 1.0);
        for x in [0.3f64, 1.0, 2.5, 4.0] {
            let want = -x + (x.exp() - 1.0);
            assert_relative_eq!(pt.ln_eval(x).unwrap(), want, max_relative = 1e-10);
        }
        let res = test_not_recurrent_1d(&pt, &TailConfig::default()).unwrap();
        // oracle: ∫_0^∞ e^x exp(1 − e^x) dx = 1 by substitution u = e^x
        assert!((res.i_plus.value.unwrap() - 1.0).abs() < 1e-6, "{:?}", res.i_plus);
        assert_eq!(res.i_minus.status, TailStatus::Divergent);
        assert_eq!(res.verdict, Verdict::NotRecurrent);
    }

    #[test]
    fn constant_density() {
        let flat = symmetrize_density(|_| 1.0, |_| 0.0, 0.0, &[]);
        for x in [-30.0, 2.0, 49.0] {
            assert_eq!(flat.eval(x).unwrap(), 1.0);
        }
        let res = test_not_recurrent_1d(&flat, &TailConfig::default()).unwrap();
        assert_eq!(res.verdict, Verdict::Inconclusive);
        assert_eq!(res.i_plus.status, TailStatus::Divergent);

        let b1 = symmetrize_density(|_| 1.0, |_| 0.0, 1.0, &[]);
        for x in [-3.0f64, 0.7, 20.0] {
            assert_relative_eq!(b1.eval(x).unwrap(), (2.0 * x).exp(), max_relative = 1e-10);
        }
        let res = test_not_recurrent_1d(&b1, &TailConfig::default()).unwrap();
        assert!((res.i_plus.value.unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(res.verdict, Verdict::NotRecurrent);
    }

    #[test]
    fn slow_drift_is_not_mistaken_for_divergence() {
        let pt = symmetrize_density(|_| 1.0, |_| 0.0, 1e-3, &[]);
        let res = test_not_recurrent_1d(&pt, &TailConfig::default()).unwrap();
        assert_eq!(res.i_plus.status, TailStatus::Convergent);
        assert_relative_eq!(res.i_plus.value.unwrap(), 500.0, max_relative = 1e-6);
    }

    #[test]
    fn zero_drift_recovers_density() {
        // b = 0: φ̃(x)·φ(0) = φ(x)
        let phi = |x: f64| 1.0 + 0.5 * (x).sin();
        let pt = symmetrize_density(phi, |x: f64| 0.5 * x.cos(), 0.0, &[]);
        for x in [-9.3, -1.0, 0.2, 5.5, 40.0] {
            assert_relative_eq!(pt.eval(x).unwrap() * phi(0.0), phi(x), max_relative = 1e-9);
        }
    }

    #[test]
    fn models() {
        let m = builtin_model("exp-generic", &BTreeMap::new()).unwrap();
        assert_relative_eq!(drift_constant(&m).unwrap(), 0.25, max_relative = 1e-14);
        let c = classify_1d(&m, &Classify1dConfig::default()).unwrap();
        assert_eq!(c.verdict, Verdict::NotRecurrent);

        let m = builtin_model("inverse-generic", &BTreeMap::new()).unwrap();
        assert_eq!(classify_1d(&m, &Classify1dConfig::default()).unwrap().verdict, Verdict::NotRecurrent);

        let m = builtin_model("lebesgue-const-drift", &BTreeMap::from([("b".to_string(), 0.0)])).unwrap();
        let c = classify_1d(&m, &Classify1dConfig::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Recurrent);

        let bm2 = builtin_model("bm-2", &BTreeMap::new()).unwrap();
        assert!(matches!(drift_constant(&bm2), Err(Scale1dError::NotApplicable(_))));
    }

    #[test]
    fn csv_export() {
        let pt = symmetrize_density(|_| 1.0, |_| 0.0, 0.5, &[]);
        let csv = pt.to_csv(&[0.0, 1.0]).unwrap();
        assert!(csv.starts_with("x,phi_tilde\n0e0,1e0\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn log_is_additive(x in -30.0f64..30.0, y in -30.0f64..30.0) {
            let pt = symmetrize_density(|x: f64| 2.0 + x.cos(), |x: f64| -x.sin(), 0.3, &[]);
            let direct = pt.segment(x, y).unwrap();
            let via = pt.ln_eval(y).unwrap() - pt.ln_eval(x).unwrap();
            prop_assert!((direct - via).abs() <= 1e-10 * (1.0 + direct.abs()));
        }

        #[test]
        fn sign_flip_swaps_half_lines(b in 0.2f64..2.0) {
            let phi = |x: f64| (-x.abs()).exp() + 0.5;
            let dphi = |x: f64| -x.signum() * (-x.abs()).exp();
            let up = test_not_recurrent_1d(&symmetrize_density(phi, dphi, b, &[0.0]), &TailConfig::default()).unwrap();
            let down = test_not_recurrent_1d(&symmetrize_density(phi, dphi, -b, &[0.0]), &TailConfig::default()).unwrap();
            prop_assert_eq!(up.i_plus.status, down.i_minus.status);
            prop_assert_eq!(up.i_minus.status, down.i_plus.status);
            let (p, q) = (up.i_plus.value.unwrap(), down.i_minus.value.unwrap());
            prop_assert!((p - q).abs() < 1e-8 * p);
        }
    }
}
