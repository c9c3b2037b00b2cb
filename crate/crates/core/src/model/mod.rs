//! Coefficient data (d, E, φ, A, B, ρ) of L = L⁰ + ⟨B,∇·⟩ and its validation.

mod builtin;
mod config;
mod validate;

pub use builtin::{builtin_config, builtin_model, builtin_names};
pub use config::{DomainConfig, DomainKind, Flags, ModelConfig, TailLaw};
pub use validate::{
    check_divergence_free, check_ellipticity, check_gauge, rayleigh_samples, validate_model,
    DivergenceResidual, EllipticityBound, Region, ValidationReport,
};

use crate::error::ModelError;
use crate::expr::Expr;

/// Radius of the ball excised around declared singularities in quadrature.
pub const EXCISION_RADIUS: f64 = 1e-8;

/// Compiled model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub config: ModelConfig,
    pub dim: usize,
    pub phi: Expr,
    pub grad_phi: Vec<Expr>,
    /// Row-major d×d.
    pub a: Vec<Expr>,
    pub b: Vec<Expr>,
    /// φ·B_i, simplified symbolically.
    pub flux: Vec<Expr>,
    pub rho: Expr,
    pub grad_rho: Vec<Expr>,
    radial_ok: bool,
}

impl ModelSpec {
    pub fn from_config(config: ModelConfig) -> Result<ModelSpec, ModelError> {
        let d = config.dimension;
        if d == 0 || d > 3 {
            return Err(ModelError::InvalidConfig(format!(
                "dimension must be 1, 2 or 3 (got {d})"
            )));
        }
        if config.a.len() != d || config.a.iter().any(|row| row.len() != d) {
            return Err(ModelError::InvalidConfig(format!("A must be {d}x{d}")));
        }
        if config.b.len() != d {
            return Err(ModelError::InvalidConfig(format!("B must have {d} entries")));
        }
        match config.domain.kind {
            DomainKind::Full => {}
            DomainKind::Interval => {
                if d != 1 || config.domain.bounds.len() != 2 || config.domain.bounds[0] >= config.domain.bounds[1] {
                    return Err(ModelError::InvalidConfig(
                        "interval domains need dimension 1 and bounds [a, b] with a < b".into(),
                    ));
                }
            }
            DomainKind::Ball => {
                if config.domain.bounds.len() != 1 || config.domain.bounds[0] <= 0.0 {
                    return Err(ModelError::InvalidConfig("ball domains need bounds [R] with R > 0".into()));
                }
            }
        }
        if let Some(k) = config.gauge_bound {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(ModelError::InvalidConfig("gauge_bound must be >= 1".into()));
            }
        }
        if config.singularities.iter().any(|s| s.len() != d) {
            return Err(ModelError::InvalidConfig("singularity points must have dimension d".into()));
        }
        let p = &config.params;
        let phi = Expr::parse(&config.phi, d, p)?;
        let grad_phi = phi.gradient();
        let mut a = Vec::with_capacity(d * d);
        for row in &config.a {
            for s in row {
                a.push(Expr::parse(s, d, p)?);
            }
        }
        let b = config
            .b
            .iter()
            .map(|s| Expr::parse(s, d, p))
            .collect::<Result<Vec<_>, _>>()?;
        let flux = b.iter().map(|bi| phi.times(bi)).collect();
        let rho = Expr::parse(&config.rho, d, p)?;
        let grad_rho = rho.gradient();
        let mut spec = ModelSpec {
            config,
            dim: d,
            phi,
            grad_phi,
            a,
            b,
            flux,
            rho,
            grad_rho,
            radial_ok: false,
        };
        spec.radial_ok = spec.config.flags.radial && spec.radial_spot_check();
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        self.config.name.as_deref().unwrap_or("custom")
    }

    pub fn flags(&self) -> &Flags {
        &self.config.flags
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.phi.eval(x)
    }

    pub fn a_at(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.a[i * self.dim + j].eval(x)
    }

    /// Symmetric part ã, row-major.
    pub fn a_sym(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = 0.5 * (self.a_at(x, i, j) + self.a_at(x, j, i));
            }
        }
        m
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.b) {
            *o = e.eval(x);
        }
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        self.rho.eval(x)
    }

    pub fn grad_rho(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.grad_rho) {
            *o = e.eval(x);
        }
    }

    /// ⟨A∇ρ,∇ρ⟩ at x.
    pub fn a_grad_rho_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut g = [0.0; 3];
        self.grad_rho(x, &mut g[..d]);
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.a_at(x, i, j) * g[i] * g[j];
            }
        }
        s
    }

    /// ⟨B,∇ρ⟩ at x.
    pub fn b_dot_grad_rho(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut g = [0.0; 3];
        self.grad_rho(x, &mut g[..d]);
        (0..d).map(|i| self.b[i].eval(x) * g[i]).sum()
    }

    /// φ⟨B,∇ρ⟩ at x, from the simplified product φ·B.
    pub fn flux_dot_grad_rho(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut g = [0.0; 3];
        self.grad_rho(x, &mut g[..d]);
        (0..d).map(|i| self.flux[i].eval(x) * g[i]).sum()
    }

    pub fn drift_is_zero(&self) -> bool {
        self.b.iter().all(|e| e.as_const() == Some(0.0))
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        let dc = &self.config.domain;
        match dc.kind {
            DomainKind::Full => true,
            DomainKind::Interval => {
                let (lo, hi) = (dc.bounds[0], dc.bounds[1]);
                if dc.open {
                    x[0] > lo && x[0] < hi
                } else {
                    x[0] >= lo && x[0] <= hi
                }
            }
            DomainKind::Ball => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if dc.open {
                    r < dc.bounds[0]
                } else {
                    r <= dc.bounds[0]
                }
            }
        }
    }

    /// Distance from x to the nearest declared singularity.
    pub fn singular_distance(&self, x: &[f64]) -> f64 {
        self.config
            .singularities
            .iter()
            .map(|s| s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn gauge_bound(&self) -> f64 {
        self.config.gauge_bound.unwrap_or(1.0)
    }

    /// Coordinate box containing E_r ∩ E.
    pub fn sublevel_box(&self, r: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.gauge_bound() * r;
        let d = self.dim;
        let mut lo = vec![-k; d];
        let mut hi = vec![k; d];
        let dc = &self.config.domain;
        match dc.kind {
            DomainKind::Full => {}
            DomainKind::Interval => {
                lo[0] = lo[0].max(dc.bounds[0]);
                hi[0] = hi[0].min(dc.bounds[1]);
            }
            DomainKind::Ball => {
                for i in 0..d {
                    lo[i] = lo[i].max(-dc.bounds[0]);
                    hi[i] = hi[i].min(dc.bounds[0]);
                }
            }
        }
        (lo, hi)
    }

    /// Breakpoints per coordinate: origin, singularities and kinks.
    pub fn breakpoints(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0]; self.dim];
        for s in &self.config.singularities {
            for (k, v) in s.iter().enumerate() {
                out[k].push(*v);
            }
        }
        if self.dim == 1 {
            out[0].extend(self.config.kinks.iter().copied());
        }
        for o in out.iter_mut() {
            o.sort_by(f64::total_cmp);
            o.dedup();
        }
        out
    }

    /// Whether the radial reduction may be used for sublevel integrals.
    pub fn radial(&self) -> bool {
        self.radial_ok
    }

    fn radial_spot_check(&self) -> bool {
        let d = self.dim;
        if !matches!(self.config.domain.kind, DomainKind::Full | DomainKind::Ball) {
            return false;
        }
        let dirs: Vec<Vec<f64>> = match d {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..7)
                .map(|k| {
                    let t = 0.9 * k as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            _ => (0..7)
                .map(|k| {
                    let t = 0.9 * k as f64;
                    let p = 0.4 + 0.3 * k as f64;
                    vec![p.sin() * t.cos(), p.sin() * t.sin(), p.cos()]
                })
                .collect(),
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()));
        for &s in &[0.37, 1.0, 2.9, 11.0] {
            let mut e1 = vec![0.0; d];
            e1[0] = s;
            if !self.in_domain(&e1) {
                continue;
            }
            let f0 = (self.phi(&e1), self.a_grad_rho_sq(&e1), self.flux_dot_grad_rho(&e1).abs());
            for u in &dirs {
                let x: Vec<f64> = u.iter().map(|v| v * s).collect();
                if !close(self.rho(&x), s) {
                    return false;
                }
                let f = (self.phi(&x), self.a_grad_rho_sq(&x), self.flux_dot_grad_rho(&x).abs());
                if !(close(f.0, f0.0) && close(f.1, f0.1) && close(f.2, f0.2)) {
                    return false;
                }
            }
        }
        true
    }
}

/// Surface area of the unit sphere in ℝ^d (2 for d = 1).
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 π^{d/2} / Γ(d/2) via the recursion ω_{d+2} = 2π ω_d / d.
            let mut w = if d.is_multiple_of(2) { 2.0 * PI } else { 4.0 * PI };
            let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
            while k < d {
                w *= 2.0 * PI / k as f64;
                k += 2;
            }
            w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 / 3.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = builtin_model("power-weight", &BTreeMap::from([("eta".to_string(), 1.0)])).unwrap();
        let b = builtin_model("power-weight", &BTreeMap::from([("eta".to_string(), 1.0)])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn radial_flag_spot_checked() {
        let m = builtin_model("bm-d", &BTreeMap::from([("d".to_string(), 3.0)])).unwrap();
        assert!(m.radial());
        let mut cfg = m.config.clone();
        cfg.phi = "1 + x1^2".into();
        let m2 = ModelSpec::from_config(cfg).unwrap();
        assert!(!m2.radial());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut cfg = builtin_config("bm-2", &Default::default()).unwrap();
        cfg.b.pop();
        assert!(matches!(ModelSpec::from_config(cfg), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let js = r#"{"dimension":1,"phi":"1","A":[["1"]],"B":["0"],"colour":"red"}"#;
        assert!(serde_json::from_str::<ModelConfig>(js).is_err());
        let ok = r#"{"dimension":1,"phi":"1","A":[["1"]],"B":["0"]}"#;
        let cfg: ModelConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg.rho, "norm(x)");
    }
}
