//! Volume growth of sublevel sets E_r = {ρ < r}:
//! v1(r) = ∫_{E_r} ⟨A∇ρ,∇ρ⟩ dμ, v2(r) = ∫_{E_r} ρ|⟨B,∇ρ⟩| dμ, v = v1 + v2,
//! and the sequence a_n = ∫_1^n r/v(r) dr.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::fit::{fit_growth_law, GrowthLawFit};
use crate::interp::Pchip;
use crate::model::{sphere_area, DomainKind, ModelSpec, EXCISION_RADIUS};
use crate::quadrature::{integrate, integrate_masked, integrate_points, QuadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    V1,
    V2,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeConfig {
    pub quad: QuadConfig,
    /// Skip the radial reduction even when it is available.
    pub force_full: bool,
    /// Smallest radius of profile grids.
    pub r_min: f64,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        VolumeConfig {
            quad: QuadConfig::default(),
            force_full: false,
            r_min: 0.5,
        }
    }
}

/// ∫ F dx over {r_lo ≤ ρ < r_hi} ∩ E, with declared singularities excised.
///
/// With the radial reduction F must depend on x only through model quantities
/// that the radial flag covers.
pub fn integrate_shell<F: Fn(&[f64]) -> f64 + Sync>(
    model: &ModelSpec,
    f: F,
    r_lo: f64,
    r_hi: f64,
    cfg: &VolumeConfig,
) -> Result<f64, VolumeError> {
    if !(r_hi >= r_lo && r_lo >= 0.0) {
        return Err(VolumeError::InvalidArgument(format!("bad shell [{r_lo}, {r_hi})")));
    }
    if r_hi == r_lo {
        return Ok(0.0);
    }
    let d = model.dim;
    let excise = |x: &[f64]| model.singular_distance(x) < EXCISION_RADIUS;
    if model.radial() && !cfg.force_full {
        let mut hi = r_hi;
        if model.config.domain.kind == DomainKind::Ball {
            hi = hi.min(model.config.domain.bounds[0]);
        }
        let mut lo = r_lo;
        if model.config.singularities.iter().any(|s| s.iter().all(|v| *v == 0.0)) {
            lo = lo.max(EXCISION_RADIUS);
        }
        if hi <= lo {
            return Ok(0.0);
        }
        let mut pts = vec![lo];
        for b in model.breakpoints()[0].iter().map(|v| v.abs()) {
            if b > lo && b < hi {
                pts.push(b);
            }
        }
        pts.extend(dyadic(lo, hi));
        pts.push(hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let w = sphere_area(d);
        let mut x = vec![0.0; d];
        let r = integrate_points(
            |s| {
                x[0] = s;
                w * s.powi(d as i32 - 1) * f(&x)
            },
            &pts,
            &cfg.quad,
        )?;
        return Ok(r.value);
    }
    let (lo, hi) = model.sublevel_box(r_hi);
    let ball = match model.config.domain.kind {
        DomainKind::Ball => Some(model.config.domain.bounds[0]),
        _ => None,
    };
    let mask = |x: &[f64]| {
        let rho = model.rho(x);
        let mut m = (rho - r_hi).max(r_lo - rho);
        if r_lo == 0.0 {
            m = rho - r_hi;
        }
        if let Some(rad) = ball {
            m = m.max(x.iter().map(|v| v * v).sum::<f64>().sqrt() - rad);
        }
        m
    };
    let mut breaks = model.breakpoints();
    for b in breaks.iter_mut() {
        for p in dyadic(0.0, r_hi) {
            b.push(p);
            b.push(-p);
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
    }
    let r = integrate_masked(
        |x| if excise(x) { 0.0 } else { f(x) },
        mask,
        &lo,
        &hi,
        &breaks,
        &cfg.quad,
    )?;
    Ok(r.value)
}

/// Powers of two strictly inside (lo, hi), from 1 upward, so that integrands
/// concentrated near the origin are not missed on long ranges.
fn dyadic(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..1100)
        .map(|k| 2f64.powi(k))
        .take_while(move |p| *p < hi)
        .filter(move |p| *p > lo)
}

fn v1_integrand(model: &ModelSpec, x: &[f64]) -> f64 {
    model.a_grad_rho_sq(x) * model.phi(x)
}

fn v2_integrand(model: &ModelSpec, x: &[f64]) -> f64 {
    model.rho(x) * model.flux_dot_grad_rho(x).abs()
}

fn check_finite(v: f64) -> Result<f64, VolumeError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(crate::error::QuadError::NonFinite.into())
    }
}

pub fn eval_v1(model: &ModelSpec, r: f64, cfg: &VolumeConfig) -> Result<f64, VolumeError> {
    if !(r > 0.0) {
        return Err(VolumeError::InvalidArgument(format!("r must be > 0 (got {r})")));
    }
    check_finite(integrate_shell(model, |x| v1_integrand(model, x), 0.0, r, cfg)?)
}

pub fn eval_v2(model: &ModelSpec, r: f64, cfg: &VolumeConfig) -> Result<f64, VolumeError> {
    if !(r > 0.0) {
        return Err(VolumeError::InvalidArgument(format!("r must be > 0 (got {r})")));
    }
    if model.drift_is_zero() {
        return Ok(0.0);
    }
    check_finite(integrate_shell(model, |x| v2_integrand(model, x), 0.0, r, cfg)?)
}

/// Sampled monotone growth function with its Stieltjes increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthProfile {
    pub kind: ProfileKind,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Mass of ν on each grid interval (r_i, r_{i+1}].
    pub stieltjes: Vec<f64>,
    /// First grid radius from which every value is positive.
    pub positivity_threshold: Option<f64>,
    #[serde(skip)]
    interp: Pchip,
}

impl GrowthProfile {
    /// Builds a profile from samples, asserting monotonicity up to `tol`
    /// relative (no clipping is performed).
    pub fn from_samples(kind: ProfileKind, radii: Vec<f64>, values: Vec<f64>, tol: f64) -> Result<GrowthProfile, VolumeError> {
        if radii.len() < 2 || radii.len() != values.len() {
            return Err(VolumeError::InvalidArgument("need >= 2 matching samples".into()));
        }
        if !radii.windows(2).all(|w| w[1] > w[0]) {
            return Err(VolumeError::InvalidArgument("radii must be strictly increasing".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < -tol * values.iter().fold(0.0f64, |a, b| a.max(b.abs())) {
                return Err(VolumeError::InvalidArgument(format!("invalid value {v} at r={}", radii[i])));
            }
        }
        for i in 0..values.len() - 1 {
            let (p, q) = (values[i], values[i + 1]);
            if q < p - tol * p.abs().max(q.abs()) - 1e-300 {
                return Err(VolumeError::MonotonicityViolation {
                    r: radii[i + 1],
                    prev: p,
                    next: q,
                });
            }
        }
        let stieltjes = values.windows(2).map(|w| w[1] - w[0]).collect();
        let positivity_threshold = (0..values.len())
            .find(|&i| values[i..].iter().all(|v| *v > 0.0))
            .map(|i| radii[i]);
        let interp = Pchip::new(&radii, &values);
        Ok(GrowthProfile {
            kind,
            radii,
            values,
            stieltjes,
            positivity_threshold,
            interp,
        })
    }

    /// Profile of a known closed-form function on a geometric grid.
    pub fn from_fn<F: Fn(f64) -> f64>(kind: ProfileKind, f: F, r_min: f64, r_max: f64, m: usize) -> Result<GrowthProfile, VolumeError> {
        let radii = radius_grid(r_min, r_max, m)?;
        let values = radii.iter().map(|r| f(*r)).collect();
        GrowthProfile::from_samples(kind, radii, values, 1e-12)
    }

    pub fn r_min(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_max(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }

    /// Interpolated value; extrapolation is an error.
    pub fn eval(&self, r: f64) -> Result<f64, VolumeError> {
        self.interp.eval(r).ok_or(VolumeError::DomainExceeded {
            r,
            lo: self.r_min(),
            hi: self.r_max(),
        })
    }

    pub fn derivative(&self, r: f64) -> Result<f64, VolumeError> {
        self.interp.derivative(r).ok_or(VolumeError::DomainExceeded {
            r,
            lo: self.r_min(),
            hi: self.r_max(),
        })
    }

    /// Samples with r in [lo, hi].
    pub fn window(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.radii
            .iter()
            .zip(&self.values)
            .filter(|(r, _)| **r >= lo && **r <= hi)
            .map(|(r, v)| (*r, *v))
            .unzip()
    }
}

/// Geometric grid on [r_min, r_max] with m points that contains r = 1.
pub fn radius_grid(r_min: f64, r_max: f64, m: usize) -> Result<Vec<f64>, VolumeError> {
    if !(r_min > 0.0 && r_max > r_min) || m < 2 {
        return Err(VolumeError::InvalidArgument(format!(
            "bad grid r_min={r_min} r_max={r_max} m={m}"
        )));
    }
    let geo = |a: f64, b: f64, k: usize| -> Vec<f64> {
        (0..k)
            .map(|i| if i + 1 == k { b } else { a * (b / a).powf(i as f64 / (k - 1) as f64) })
            .collect()
    };
    if r_min >= 1.0 || r_max <= 1.0 {
        return Ok(geo(r_min, r_max, m));
    }
    let frac = (1.0 / r_min).ln() / (r_max / r_min).ln();
    let m1 = ((frac * (m - 1) as f64).round() as usize).clamp(1, m - 2);
    let mut g = geo(r_min, 1.0, m1 + 1);
    g.pop();
    g.extend(geo(1.0, r_max, m - m1));
    Ok(g)
}

/// The three profiles v1, v2, v on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profiles {
    pub v1: GrowthProfile,
    pub v2: GrowthProfile,
    pub v: GrowthProfile,
}

impl Profiles {
    pub fn get(&self, kind: ProfileKind) -> &GrowthProfile {
        match kind {
            ProfileKind::V1 => &self.v1,
            ProfileKind::V2 => &self.v2,
            ProfileKind::V => &self.v,
        }
    }

    /// CSV with header `r,v1,v2,v`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,v1,v2,v\n");
        for i in 0..self.v.radii.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                self.v.radii[i], self.v1.values[i], self.v2.values[i], self.v.values[i]
            ));
        }
        s
    }
}

/// Evaluates v1 and v2 on the grid in parallel and assembles all three profiles.
pub fn build_profiles(model: &ModelSpec, r_max: f64, m: usize, cfg: &VolumeConfig) -> Result<Profiles, VolumeError> {
    if !(r_max > 1.0) || m < 8 {
        return Err(VolumeError::InvalidArgument(format!(
            "need r_max > 1 and m >= 8 (got {r_max}, {m})"
        )));
    }
    let radii = radius_grid(cfg.r_min.min(1.0), r_max, m)?;
    profiles_on(model, &radii, cfg)
}

/// Profiles on an explicit grid.
pub fn profiles_on(model: &ModelSpec, radii: &[f64], cfg: &VolumeConfig) -> Result<Profiles, VolumeError> {
    let vals: Vec<Result<(f64, f64), VolumeError>> = radii
        .par_iter()
        .map(|&r| Ok((eval_v1(model, r, cfg)?, eval_v2(model, r, cfg)?)))
        .collect();
    let mut v1 = Vec::with_capacity(radii.len());
    let mut v2 = Vec::with_capacity(radii.len());
    for v in vals {
        let (a, b) = v?;
        v1.push(a);
        v2.push(b);
    }
    let v: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
    let tol = 10.0 * cfg.quad.rel_tol;
    Ok(Profiles {
        v1: GrowthProfile::from_samples(ProfileKind::V1, radii.to_vec(), v1, tol)?,
        v2: GrowthProfile::from_samples(ProfileKind::V2, radii.to_vec(), v2, tol)?,
        v: GrowthProfile::from_samples(ProfileKind::V, radii.to_vec(), v, tol)?,
    })
}

pub fn build_profile(model: &ModelSpec, kind: ProfileKind, r_max: f64, m: usize, cfg: &VolumeConfig) -> Result<GrowthProfile, VolumeError> {
    let p = build_profiles(model, r_max, m, cfg)?;
    Ok(match kind {
        ProfileKind::V1 => p.v1,
        ProfileKind::V2 => p.v2,
        ProfileKind::V => p.v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ASequence {
    pub n: Vec<f64>,
    pub a: Vec<f64>,
    /// Growth law of a_n fitted on the top decade, when enough points exist.
    pub tail_fit: Option<GrowthLawFit>,
}

impl ASequence {
    pub fn at(&self, n: f64) -> Option<f64> {
        self.n.iter().position(|v| *v == n).map(|i| self.a[i])
    }
}

/// a_n = ∫_1^n r/v(r) dr against the interpolated profile, accumulated over
/// the sorted n values so the sequence is non-decreasing by construction.
pub fn compute_a(profile: &GrowthProfile, n_list: &[f64], quad: &QuadConfig) -> Result<ASequence, VolumeError> {
    let mut ns: Vec<f64> = n_list.to_vec();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if let Some(&bad) = ns.iter().find(|v| !(**v >= 1.0)) {
        return Err(VolumeError::InvalidArgument(format!("n must be >= 1 (got {bad})")));
    }
    if let Some(&last) = ns.last() {
        if last > profile.r_max() {
            return Err(VolumeError::DomainExceeded {
                r: last,
                lo: profile.r_min(),
                hi: profile.r_max(),
            });
        }
    }
    let (r_in, v_in) = profile.window(1.0, ns.last().copied().unwrap_or(1.0));
    if let Some(i) = v_in.iter().position(|v| *v <= 0.0) {
        return Err(VolumeError::InvalidArgument(format!(
            "profile not positive at r={} on [1, n_max]",
            r_in[i]
        )));
    }
    let mut a = Vec::with_capacity(ns.len());
    let mut acc = 0.0;
    let mut prev = 1.0;
    for &n in &ns {
        if n > prev {
            let mut pts = vec![prev];
            pts.extend(profile.radii.iter().copied().filter(|r| *r > prev && *r < n));
            pts.push(n);
            let mut err = None;
            let r = integrate_points(
                |r| match profile.eval(r) {
                    Ok(v) => r / v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                &pts,
                quad,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            acc += r.value;
            prev = n;
        }
        a.push(acc);
    }
    let top = ns.last().copied().unwrap_or(1.0);
    let idx: Vec<usize> = (0..ns.len()).filter(|&i| ns[i] >= top / 10.0 && ns[i] > 1.0).collect();
    let tail_fit = if idx.len() >= 4 {
        let x: Vec<f64> = idx.iter().map(|&i| ns[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        Some(fit_growth_law(&x, &y))
    } else {
        None
    };
    Ok(ASequence { n: ns, a, tail_fit })
}

/// ∫_{-1}^{1} exp(-1/(1-t²)) dt.
pub const MOLLIFIER_MASS: f64 = 0.443_993_816_168_079_4;

fn mollifier(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp() / MOLLIFIER_MASS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifyEntry {
    pub eps: f64,
    /// ∫_1^n r²/(v1^ε)² d v1^ε.
    pub lhs: f64,
    pub residual: f64,
    /// ∫_1^n r²/v1² d v1^ε (unmollified weight), diagnostic only.
    pub lhs_measure_only: f64,
    pub residual_measure_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifyReport {
    pub n: f64,
    /// 2∫_1^n r/v1 dr + 1/v1(1) − n²/v1(n).
    pub rhs: f64,
    pub entries: Vec<MollifyEntry>,
}

impl MollifyReport {
    /// Residuals non-increasing along decreasing ε, up to `floor`.
    pub fn converges(&self, floor: f64) -> bool {
        let mut e = self.entries.clone();
        e.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        e.windows(2).all(|w| w[1].residual <= w[0].residual.max(floor))
    }
}

/// Compares ∫_1^n r²/v1² dν1 computed through the mollified distribution
/// function v1^ε = v1 * η_ε with the integrated-by-parts closed form.
pub fn mollify_check(profile: &GrowthProfile, n: f64, eps_list: &[f64]) -> Result<MollifyReport, VolumeError> {
    let max_eps = eps_list.iter().copied().fold(0.0, f64::max);
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(VolumeError::InvalidArgument("eps must be > 0".into()));
    }
    if !(n >= 1.0) {
        return Err(VolumeError::InvalidArgument(format!("n must be >= 1 (got {n})")));
    }
    let lo = 1.0 - max_eps;
    let hi = n + max_eps;
    if lo < profile.r_min() || hi > profile.r_max() {
        return Err(VolumeError::DomainExceeded {
            r: if lo < profile.r_min() { lo } else { hi },
            lo: profile.r_min(),
            hi: profile.r_max(),
        });
    }
    let (rs, vs) = profile.window(lo, hi);
    for i in 1..vs.len() {
        if vs[i] <= vs[i - 1] {
            return Err(VolumeError::NotStrictlyIncreasing(rs[i]));
        }
    }
    if vs.first().is_none_or(|v| *v <= 0.0) || profile.eval(lo)? <= 0.0 {
        return Err(VolumeError::NotStrictlyIncreasing(lo));
    }
    let tight = QuadConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        ..Default::default()
    };
    let v1 = |r: f64| profile.eval(r).unwrap_or(f64::NAN);
    let dv1 = |r: f64| profile.derivative(r).unwrap_or(f64::NAN);
    let mut pts = vec![1.0];
    pts.extend(profile.radii.iter().copied().filter(|r| *r > 1.0 && *r < n));
    pts.push(n);
    let a = if n > 1.0 {
        integrate_points(|r| r / v1(r), &pts, &tight)?.value
    } else {
        0.0
    };
    let rhs = 2.0 * a + 1.0 / v1(1.0) - n * n / v1(n);
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let conv = |g: &dyn Fn(f64) -> f64, r: f64| -> f64 {
            integrate(|t| g(r - eps * t) * mollifier(t), -1.0, 1.0, &tight)
                .map(|q| q.value)
                .unwrap_or(f64::NAN)
        };
        let (lhs, lhs_m) = if n > 1.0 {
            let l = integrate_points(
                |r| {
                    let ve = conv(&v1, r);
                    r * r / (ve * ve) * conv(&dv1, r)
                },
                &pts,
                &QuadConfig::with_rel(1e-11),
            )?
            .value;
            let lm = integrate_points(
                |r| {
                    let v = v1(r);
                    r * r / (v * v) * conv(&dv1, r)
                },
                &pts,
                &QuadConfig::with_rel(1e-11),
            )?
            .value;
            (l, lm)
        } else {
            (0.0, 0.0)
        };
        if !lhs.is_finite() || !lhs_m.is_finite() {
            return Err(crate::error::QuadError::NonFinite.into());
        }
        entries.push(MollifyEntry {
            eps,
            lhs,
            residual: (lhs - rhs).abs(),
            lhs_measure_only: lhs_m,
            residual_measure_only: (lhs_m - rhs).abs(),
        });
    }
    Ok(MollifyReport { n, rhs, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn bm(d: usize) -> ModelSpec {
        builtin_model("bm-d", &BTreeMap::from([("d".to_string(), d as f64)])).unwrap()
    }

    fn pw(eta: f64, d: usize) -> ModelSpec {
        builtin_model(
            "power-weight",
            &BTreeMap::from([("eta".to_string(), eta), ("d".to_string(), d as f64)]),
        )
        .unwrap()
    }

    #[test]
    fn mollifier_mass_constant() {
        let m = integrate(|t| (-1.0 / (1.0 - t * t)).exp(), -1.0, 1.0, &QuadConfig::with_rel(1e-14)).unwrap();
        assert_relative_eq!(m.value, MOLLIFIER_MASS, max_relative = 1e-13);
    }

    #[test]
    fn disc_area() {
        let c = VolumeConfig::default();
        assert_relative_eq!(eval_v1(&bm(2), 2.0, &c).unwrap(), 4.0 * PI, max_relative = 1e-9);
        assert_eq!(eval_v2(&bm(2), 2.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn power_weight_by_brute_quadrature() {
        // oracle: polar brute force ∫_0^{2π}∫_0^1 s^η s ds dθ on a midpoint grid
        let n = 200_000;
        let h = 1.0 / n as f64;
        let oracle: f64 = 2.0 * PI * (0..n).map(|i| ((i as f64 + 0.5) * h).powi(2) * h).sum::<f64>();
        let v = eval_v1(&pw(1.0, 2), 1.0, &VolumeConfig::default()).unwrap();
        assert_relative_eq!(v, oracle, max_relative = 1e-8);
        assert_relative_eq!(v, 2.0 * PI / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_mass() {
        let m = builtin_model("gauss-strongdrift", &BTreeMap::new()).unwrap();
        // oracle: erf(10)·√π, erf(10) = 1 to double precision
        let v = eval_v1(&m, 10.0, &VolumeConfig::default()).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-6);
        // v2 = ∫|x|·6 dx = 6 r²: φ·B simplifies to the constant -6
        let v2 = eval_v2(&m, 40.0, &VolumeConfig::default()).unwrap();
        assert_relative_eq!(v2, 6.0 * 1600.0, max_relative = 1e-9);
    }

    #[test]
    fn exp_generic_v2_and_v() {
        let m = builtin_model("exp-generic", &BTreeMap::new()).unwrap();
        let c = VolumeConfig::default();
        // oracle: direct quadrature of |x|/2 on (-3, 3)
        let direct = integrate(|x: f64| x.abs() * 0.5, -3.0, 3.0, &QuadConfig::default()).unwrap().value;
        assert_relative_eq!(eval_v2(&m, 3.0, &c).unwrap(), direct, max_relative = 1e-9);
        assert_relative_eq!(direct, 4.5, max_relative = 1e-12);
        let v = eval_v1(&m, 2.0, &c).unwrap() + eval_v2(&m, 2.0, &c).unwrap();
        assert_relative_eq!(v, 2.0 * (1.0 - (-2.0f64).exp()) + 2.0, max_relative = 1e-9);
    }

    #[test]
    fn rotation_drift_has_no_radial_part() {
        let mut cfg = crate::model::builtin_config("bm-2", &BTreeMap::new()).unwrap();
        cfg.b = vec!["-x2".into(), "x1".into()];
        let m = ModelSpec::from_config(cfg).unwrap();
        for r in [0.5, 3.0] {
            assert!(eval_v2(&m, r, &VolumeConfig::default()).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn radial_and_full_agree() {
        let full = VolumeConfig {
            force_full: true,
            ..Default::default()
        };
        let rad = VolumeConfig::default();
        for m in [bm(2), pw(1.0, 2), pw(-1.0, 2)] {
            for r in [0.7, 1.0, 3.0] {
                let a = eval_v1(&m, r, &rad).unwrap();
                let b = eval_v1(&m, r, &full).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-5);
            }
        }
        let m = builtin_model("exp-generic", &BTreeMap::new()).unwrap();
        for r in [0.5, 2.0] {
            assert_relative_eq!(eval_v2(&m, r, &rad).unwrap(), eval_v2(&m, r, &full).unwrap(), max_relative = 1e-7);
        }
    }

    #[test]
    fn grid_contains_one() {
        let g = radius_grid(0.5, 100.0, 40).unwrap();
        assert_eq!(g.len(), 40);
        assert!(g.contains(&1.0));
        assert_eq!(*g.last().unwrap(), 100.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bm2_profile_on_dyadic_grid() {
        let p = profiles_on(&bm(2), &[1.0, 2.0, 4.0], &VolumeConfig::default()).unwrap();
        for (v, e) in p.v1.values.iter().zip([PI, 4.0 * PI, 16.0 * PI]) {
            assert_relative_eq!(*v, e, max_relative = 1e-9);
        }
        assert_eq!(p.v1.eval(1.0).unwrap(), p.v1.values[0]);
        assert!(matches!(p.v1.eval(4.5), Err(VolumeError::DomainExceeded { .. })));
    }

    #[test]
    fn power_weight_profile_value() {
        let p = build_profile(&pw(1.0, 2), ProfileKind::V1, 4.0, 12, &VolumeConfig::default()).unwrap();
        assert_relative_eq!(p.eval(4.0).unwrap(), 2.0 * PI / 3.0 * 64.0, max_relative = 1e-8);
    }

    #[test]
    fn monotonicity_asserted_not_clipped() {
        let e = GrowthProfile::from_samples(ProfileKind::V, vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 1.5], 1e-7);
        assert!(matches!(e, Err(VolumeError::MonotonicityViolation { .. })));
    }

    #[test]
    fn a_sequence_examples() {
        let p = GrowthProfile::from_fn(ProfileKind::V, |r| PI * r * r, 0.5, 1e3, 60).unwrap();
        let n_pi = PI.exp();
        let a = compute_a(&p, &[1.0, n_pi, 100.0], &QuadConfig::default()).unwrap();
        assert_eq!(a.at(1.0), Some(0.0));
        assert_relative_eq!(a.at(n_pi).unwrap(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(a.at(100.0).unwrap(), 100f64.ln() / PI, max_relative = 1e-8);
        let p3 = GrowthProfile::from_fn(ProfileKind::V, |r| r * r * r, 0.5, 1e3, 60).unwrap();
        let a3 = compute_a(&p3, &[10.0, 1000.0], &QuadConfig::default()).unwrap();
        assert_relative_eq!(a3.at(10.0).unwrap(), 0.9, max_relative = 1e-8);
        assert_relative_eq!(a3.at(1000.0).unwrap(), 0.999, max_relative = 1e-8);
        assert!(matches!(
            compute_a(&p3, &[2000.0], &QuadConfig::default()),
            Err(VolumeError::DomainExceeded { .. })
        ));
    }

    #[test]
    fn mollify_quadratic() {
        let p = GrowthProfile::from_fn(ProfileKind::V1, |r| PI * r * r, 0.5, 10.0, 40).unwrap();
        let rep = mollify_check(&p, 4.0, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert_relative_eq!(rep.rhs, 2.0 * 4f64.ln() / PI, max_relative = 1e-9);
        assert!(rep.entries[1].residual < 1e-3);
        assert!(rep.entries[0].residual >= 10.0 * rep.entries[2].residual);
        assert!(rep.converges(1e-10));
    }

    #[test]
    fn mollify_linear_and_trivial() {
        let p = GrowthProfile::from_fn(ProfileKind::V1, |r| r, 0.5, 10.0, 30).unwrap();
        let rep = mollify_check(&p, 2.0, &[1e-2, 1e-3]).unwrap();
        assert_relative_eq!(rep.rhs, 1.0, max_relative = 1e-10);
        assert!(rep.entries.iter().all(|e| e.residual < 1e-5));
        let rep1 = mollify_check(&p, 1.0, &[1e-3]).unwrap();
        assert!(rep1.rhs.abs() < 1e-15 && rep1.entries[0].residual < 1e-15);
    }

    #[test]
    fn mollify_rejects_flat_profile() {
        let p = GrowthProfile::from_fn(ProfileKind::V1, |r| r.min(2.0), 0.5, 10.0, 30).unwrap();
        assert!(matches!(
            mollify_check(&p, 4.0, &[1e-3]),
            Err(VolumeError::NotStrictlyIncreasing(_))
        ));
    }
}
