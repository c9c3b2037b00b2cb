//! Ellipticity, divergence-free and gauge checks on sampled points.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::ModelError;
use crate::quadrature::{integrate_box, QuadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn cube(d: usize, half: f64) -> Region {
        Region::Box {
            lo: vec![-half; d],
            hi: vec![half; d],
        }
    }

    fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Ball { center, .. } => center.len(),
        }
    }

    /// Deterministic sample: boundary anchor points then a Halton sequence.
    pub fn samples(&self, n: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n + 16);
        match self {
            Region::Box { lo, hi } => {
                out.push(lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect());
                for mask in 0..(1usize << d) {
                    out.push((0..d).map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] }).collect());
                }
                let mut i = 1;
                while out.len() < n + (1 << d) + 1 {
                    let h = halton(i, d);
                    out.push((0..d).map(|k| lo[k] + (hi[k] - lo[k]) * h[k]).collect());
                    i += 1;
                }
            }
            Region::Ball { center, radius } => {
                out.push(center.clone());
                for k in 0..d {
                    for s in [-1.0, 1.0] {
                        let mut p = center.clone();
                        p[k] += s * radius;
                        out.push(p);
                    }
                }
                let mut i = 1;
                let want = n + 2 * d + 1;
                while out.len() < want {
                    let h = halton(i, d);
                    i += 1;
                    let u: Vec<f64> = h.iter().map(|v| 2.0 * v - 1.0).collect();
                    if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                        out.push(center.iter().zip(&u).map(|(c, v)| c + radius * v).collect());
                    }
                }
            }
        }
        out
    }
}

fn halton(i: usize, d: usize) -> Vec<f64> {
    const BASES: [usize; 3] = [2, 3, 5];
    (0..d)
        .map(|k| {
            let b = BASES[k];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut n = i;
            while n > 0 {
                f /= b as f64;
                r += f * (n % b) as f64;
                n /= b;
            }
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBound {
    pub region: Region,
    pub nu: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    pub n_samples: usize,
}

/// Extremal Rayleigh quotients (min, max eigenvalue of ã) at each sampled
/// point of `region` inside the domain.
pub fn rayleigh_samples(model: &ModelSpec, region: &Region, n_samples: usize) -> Result<Vec<(f64, f64)>, ModelError> {
    if n_samples == 0 {
        return Err(ModelError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let d = model.dim;
    let mut out = Vec::new();
    for x in region.samples(n_samples) {
        if !model.in_domain(&x) || model.singular_distance(&x) < super::EXCISION_RADIUS {
            continue;
        }
        let m = DMatrix::from_row_slice(d, d, &model.a_sym(&x));
        if m.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let eig = SymmetricEigen::new(m).eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        if lo <= 0.0 {
            return Err(ModelError::NonPositiveDefinite { at: x, min_eig: lo });
        }
        out.push((lo, hi));
    }
    if out.is_empty() {
        return Err(ModelError::EmptyRegion);
    }
    Ok(out)
}

/// Smallest ν ≥ 1 with all sampled quotients of ã in [1/ν, ν].
pub fn check_ellipticity(model: &ModelSpec, region: &Region, n_samples: usize) -> Result<EllipticityBound, ModelError> {
    let q = rayleigh_samples(model, region, n_samples)?;
    let min_q = q.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_q = q.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(EllipticityBound {
        region: region.clone(),
        nu: 1f64.max(max_q).max(1.0 / min_q),
        min_quotient: min_q,
        max_quotient: max_q,
        n_samples: q.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResidual {
    pub id: String,
    /// |∫⟨B,∇f⟩φ dx|
    pub residual: f64,
    /// ∫|B||∇f|φ dx
    pub scale: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub divergence_free_residuals: Vec<DivergenceResidual>,
    pub ellipticity_bounds: Vec<EllipticityBound>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn divergence_free(&self) -> bool {
        self.divergence_free_residuals.iter().all(|r| r.passed)
    }
}

/// Bump centres and radii on a fixed lattice, kept inside the domain.
fn bump_lattice(model: &ModelSpec, n: usize) -> Vec<(Vec<f64>, f64)> {
    let d = model.dim;
    let mut out = Vec::with_capacity(n);
    let mut i = 1;
    let radii = [0.5, 1.0, 1.5, 0.75];
    while out.len() < n && i < 100 * (n + 1) {
        let h = halton(i, d);
        let r = radii[out.len() % radii.len()];
        let c: Vec<f64> = h.iter().map(|v| -2.5 + 5.0 * v).collect();
        i += 1;
        // the whole support must lie in the domain
        let mut inside = model.in_domain(&c);
        for k in 0..d {
            for s in [-1.0, 1.0] {
                let mut p = c.clone();
                p[k] += s * r;
                inside &= model.in_domain(&p);
            }
        }
        if inside {
            out.push((c, r));
        }
    }
    out
}

/// Checks ∫⟨B,∇f⟩φ dx = 0 on smooth bumps f = exp(-1/(1-|x-c|²/r²)).
pub fn check_divergence_free(model: &ModelSpec, n_test_functions: usize, tol: f64) -> Result<ValidationReport, ModelError> {
    if !(tol > 0.0) {
        return Err(ModelError::InvalidConfig("tol must be > 0".into()));
    }
    let d = model.dim;
    let mut report = ValidationReport::default();
    for (k, (c, r)) in bump_lattice(model, n_test_functions).into_iter().enumerate() {
        let id = format!("bump{k}(c={c:?},r={r})");
        if model.drift_is_zero() {
            report.divergence_free_residuals.push(DivergenceResidual {
                id,
                residual: 0.0,
                scale: 0.0,
                passed: true,
            });
            continue;
        }
        let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
        let excise = |x: &[f64]| model.singular_distance(x) < super::EXCISION_RADIUS;
        // returns (⟨B,∇f⟩φ, |B||∇f|φ)
        let integrand = |x: &[f64], abs: bool| -> f64 {
            let mut s = 0.0;
            for k in 0..d {
                let t = (x[k] - c[k]) / r;
                s += t * t;
            }
            if s >= 1.0 || excise(x) {
                return 0.0;
            }
            let f = (-1.0 / (1.0 - s)).exp();
            let g = -f / ((1.0 - s) * (1.0 - s)) * 2.0 / (r * r);
            let mut dot = 0.0;
            let mut bn = 0.0;
            let mut gn = 0.0;
            for k in 0..d {
                let bk = model.flux[k].eval(x);
                let gk = g * (x[k] - c[k]);
                dot += bk * gk;
                bn += bk * bk;
                gn += gk * gk;
            }
            if abs {
                bn.sqrt() * gn.sqrt()
            } else {
                dot
            }
        };
        let mut breaks: Vec<Vec<f64>> = model.breakpoints();
        for (k, b) in breaks.iter_mut().enumerate() {
            b.push(c[k]);
        }
        let loose = QuadConfig::with_rel(1e-6);
        let scale = integrate_box(|x| integrand(x, true), &lo, &hi, &breaks, &loose)?.value;
        let cfg = QuadConfig {
            rel_tol: 1e-10,
            abs_tol: (0.01 * tol * scale).max(1e-300),
            ..Default::default()
        };
        let res = integrate_box(|x| integrand(x, false), &lo, &hi, &breaks, &cfg)?;
        let residual = res.value.abs();
        if !residual.is_finite() || !scale.is_finite() {
            return Err(crate::error::QuadError::NonFinite.into());
        }
        report.divergence_free_residuals.push(DivergenceResidual {
            id,
            residual,
            scale,
            passed: residual <= tol * scale,
        });
    }
    Ok(report)
}

/// Spot check that E_r ⊂ B_{k r}: ρ(x) ≥ |x|/k on sampled spheres.
pub fn check_gauge(model: &ModelSpec) -> Vec<String> {
    let d = model.dim;
    let k = model.gauge_bound();
    let mut warn = Vec::new();
    for &rad in &[0.5, 2.0, 10.0, 100.0] {
        for x in (Region::Ball { center: vec![0.0; d], radius: rad }).samples(32).into_iter().skip(1) {
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - rad).abs() > 1e-12 * rad || !model.in_domain(&x) {
                continue;
            }
            let r = model.rho(&x);
            if !r.is_finite() || r < 0.0 {
                warn.push(format!("rho not finite/non-negative at {x:?}"));
            } else if r < n / k * (1.0 - 1e-12) {
                warn.push(format!("sublevel set E_r not inside B_(k r) at {x:?}: rho={r}, |x|={n}, k={k}"));
            }
        }
    }
    warn
}

/// Full validation: positivity of φ, ellipticity on nested cubes, gauge
/// containment and divergence-freeness.
pub fn validate_model(model: &ModelSpec, n_test_functions: usize, tol: f64) -> Result<ValidationReport, ModelError> {
    let d = model.dim;
    for x in Region::cube(d, 10.0).samples(256) {
        if model.in_domain(&x) && model.singular_distance(&x) >= super::EXCISION_RADIUS {
            let p = model.phi(&x);
            if !(p > 0.0) {
                return Err(ModelError::NonPositiveDensity { at: x });
            }
        }
    }
    let mut report = check_divergence_free(model, n_test_functions, tol)?;
    for half in [1.0, 10.0] {
        match check_ellipticity(model, &Region::cube(d, half), 256) {
            Ok(b) => report.ellipticity_bounds.push(b),
            Err(ModelError::EmptyRegion) => report.warnings.push(format!("cube of half-width {half} misses the domain")),
            Err(e) => return Err(e),
        }
    }
    report.warnings.extend(check_gauge(model));
    if model.config.flags.radial && !model.radial() {
        report.warnings.push("radial flag set but spot check failed; using full-dimensional quadrature".into());
    }
    if !report.divergence_free() {
        report.warnings.push("drift is not divergence-free with respect to mu".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_config, builtin_model, ModelConfig};
    use std::collections::BTreeMap;

    fn with_a(d: usize, a: Vec<Vec<&str>>) -> ModelSpec {
        let mut cfg = builtin_config("bm-d", &BTreeMap::from([("d".to_string(), d as f64)])).unwrap();
        cfg.a = a.into_iter().map(|r| r.into_iter().map(String::from).collect()).collect();
        ModelSpec::from_config(cfg).unwrap()
    }

    #[test]
    fn identity_has_nu_one() {
        let m = builtin_model("bm-2", &BTreeMap::new()).unwrap();
        let b = check_ellipticity(&m, &Region::cube(2, 3.0), 64).unwrap();
        assert_eq!(b.nu, 1.0);
    }

    #[test]
    fn diagonal_two_half() {
        let m = with_a(2, vec![vec!["2", "0"], vec!["0", "0.5"]]);
        let b = check_ellipticity(&m, &Region::cube(2, 1.0), 16).unwrap();
        assert!((b.nu - 2.0).abs() < 1e-14);
    }

    #[test]
    fn growing_matrix_on_unit_ball() {
        let m = with_a(2, vec![vec!["1 + norm(x)^2", "0"], vec!["0", "1 + norm(x)^2"]]);
        let b = check_ellipticity(&m, &Region::Ball { center: vec![0.0, 0.0], radius: 1.0 }, 200).unwrap();
        // oracle: dense polar grid maximum of 1 + |x|^2 over the closed ball
        let mut oracle: f64 = 1.0;
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            oracle = oracle.max(1.0 + s * s);
        }
        assert!((b.nu - oracle).abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_part_ignored() {
        let m = with_a(2, vec![vec!["1", "5"], vec!["-5", "1"]]);
        assert_eq!(check_ellipticity(&m, &Region::cube(2, 1.0), 8).unwrap().nu, 1.0);
    }

    #[test]
    fn indefinite_rejected() {
        let m = with_a(2, vec![vec!["1", "0"], vec!["0", "x1"]]);
        assert!(matches!(
            check_ellipticity(&m, &Region::cube(2, 1.0), 8),
            Err(ModelError::NonPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rotation_field_divergence_free() {
        let mut cfg = builtin_config("bm-2", &BTreeMap::new()).unwrap();
        cfg.b = vec!["-x2".into(), "x1".into()];
        let m = ModelSpec::from_config(cfg).unwrap();
        let r = check_divergence_free(&m, 4, 1e-6).unwrap();
        assert!(r.divergence_free(), "{r:?}");
    }

    #[test]
    fn strong_drift_divergence_free() {
        let m = builtin_model("gauss-strongdrift", &BTreeMap::new()).unwrap();
        let r = check_divergence_free(&m, 6, 1e-6).unwrap();
        assert!(r.divergence_free(), "{r:?}");
    }

    #[test]
    fn linear_drift_fails_with_predicted_residual() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"dimension":1,"phi":"1","A":[["1"]],"B":["x1"]}"#).unwrap();
        let m = ModelSpec::from_config(cfg).unwrap();
        let r = check_divergence_free(&m, 3, 1e-6).unwrap();
        assert!(!r.divergence_free());
        // oracle: ∫ x f'(x) dx = -∫ f dx
        for (k, (c, rad)) in bump_lattice(&m, 3).into_iter().enumerate() {
            let mass = crate::quadrature::integrate(
                |x: f64| {
                    let s = ((x - c[0]) / rad).powi(2);
                    if s >= 1.0 { 0.0 } else { (-1.0 / (1.0 - s)).exp() }
                },
                c[0] - rad,
                c[0] + rad,
                &QuadConfig::with_rel(1e-12),
            )
            .unwrap()
            .value;
            let got = r.divergence_free_residuals[k].residual;
            assert!((got - mass).abs() < 1e-8 * mass, "{got} vs {mass}");
        }
    }

    #[test]
    fn builtins_pass_divergence_check() {
        for name in crate::model::builtin_names() {
            let m = builtin_model(name, &BTreeMap::new()).unwrap();
            let r = check_divergence_free(&m, 4, 1e-6).unwrap();
            assert!(r.divergence_free(), "{name}: {r:?}");
        }
    }

    #[test]
    fn gauge_warning_for_short_gauge() {
        let mut cfg = builtin_config("bm-2", &BTreeMap::new()).unwrap();
        cfg.rho = "0.5*norm(x)".into();
        let m = ModelSpec::from_config(cfg.clone()).unwrap();
        assert!(!check_gauge(&m).is_empty());
        cfg.gauge_bound = Some(2.0);
        let m = ModelSpec::from_config(cfg).unwrap();
        assert!(check_gauge(&m).is_empty());
    }
}
