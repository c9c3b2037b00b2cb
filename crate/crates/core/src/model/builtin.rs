//! Catalogue of named example models.

use std::collections::BTreeMap;

use super::config::{DomainConfig, Flags, ModelConfig, TailLaw};
use super::{sphere_area, ModelSpec};
use crate::error::ModelError;

const NAMES: &[&str] = &[
    "bm-d",
    "gauss-strongdrift",
    "exp-generic",
    "inverse-generic",
    "lebesgue-const-drift",
    "power-weight",
];

pub fn builtin_names() -> &'static [&'static str] {
    NAMES
}

fn identity(d: usize) -> Vec<Vec<String>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { "1" } else { "0" }.to_string()).collect())
        .collect()
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn dim_param(params: &BTreeMap<String, f64>, default: usize) -> Result<usize, ModelError> {
    let d = param(params, "d", default as f64);
    if d.fract() != 0.0 || !(1.0..=3.0).contains(&d) {
        return Err(ModelError::InvalidConfig(format!("d must be 1, 2 or 3 (got {d})")));
    }
    Ok(d as usize)
}

const ELLIPTIC_NOTE: &str =
    "locally uniformly elliptic coefficients with locally bounded drift on a connected domain; \
     transition kernels are strictly positive";

/// Config of a named builtin. `bm-1`, `bm-2`, `bm-3` are aliases of `bm-d`
/// with the dimension fixed; other parameters are read from `params`.
pub fn builtin_config(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelConfig, ModelError> {
    let mut params = params.clone();
    let base = match name {
        "bm-1" | "bm-2" | "bm-3" => {
            params.insert("d".into(), name[3..].parse::<f64>().unwrap());
            "bm-d"
        }
        other => other,
    };
    let one_d = |phi: &str, b: &str, p: BTreeMap<String, f64>| ModelConfig {
        name: Some(name.to_string()),
        dimension: 1,
        domain: DomainConfig::default(),
        phi: phi.into(),
        a: identity(1),
        b: vec![b.into()],
        rho: "abs(x1)".into(),
        params: p,
        flags: Flags {
            smooth_phi: true,
            smooth_a: true,
            radial: true,
            irreducible: true,
            condition_c: true,
            heat_kernel_bounds: false,
        },
        singularities: vec![],
        kinks: vec![],
        tail_law: None,
        gauge_bound: None,
        irreducibility_note: Some(ELLIPTIC_NOTE.into()),
        lab_extent: None,
    };
    let cfg = match base {
        "bm-d" => {
            let d = dim_param(&params, 2)?;
            ModelConfig {
                name: Some(format!("bm-{d}")),
                dimension: d,
                domain: DomainConfig::default(),
                phi: "1".into(),
                a: identity(d),
                b: vec!["0".into(); d],
                rho: "norm(x)".into(),
                params: BTreeMap::new(),
                flags: Flags {
                    smooth_phi: true,
                    smooth_a: true,
                    radial: true,
                    irreducible: true,
                    condition_c: true,
                    heat_kernel_bounds: true,
                },
                singularities: vec![],
                kinks: vec![],
                tail_law: Some(TailLaw {
                    c: sphere_area(d) / d as f64,
                    gamma: d as f64,
                }),
                gauge_bound: None,
                irreducibility_note: Some("Brownian transition densities are strictly positive".into()),
                lab_extent: Some(10.0),
            }
        }
        "gauss-strongdrift" => {
            let mut c = one_d("exp(-x1^2)", "-6*exp(x1^2)", BTreeMap::new());
            c.lab_extent = Some(2.0);
            c
        }
        "exp-generic" | "inverse-generic" => {
            let b = param(&params, "b", 0.5);
            let p = BTreeMap::from([("b".to_string(), b)]);
            let mut c = if base == "exp-generic" {
                one_d("exp(-abs(x1))", "b*exp(abs(x1))", p)
            } else {
                let mut c = one_d("min(1, 1/abs(x1))", "b*max(1, abs(x1))", p);
                c.kinks = vec![-1.0, 1.0];
                c.flags.smooth_phi = false;
                c
            };
            c.kinks.push(0.0);
            c.kinks.sort_by(f64::total_cmp);
            c.lab_extent = Some(5.0);
            c
        }
        "lebesgue-const-drift" => {
            let b = param(&params, "b", 1.0);
            let mut c = one_d("1", "b", BTreeMap::from([("b".to_string(), b)]));
            c.lab_extent = Some(10.0);
            c
        }
        "power-weight" => {
            let d = dim_param(&params, 2)?;
            let eta = param(&params, "eta", 1.0);
            if eta <= -(d as f64) {
                return Err(ModelError::InvalidConfig(format!(
                    "power-weight needs eta > -d (got eta={eta}, d={d})"
                )));
            }
            let df = d as f64;
            ModelConfig {
                name: Some(name.to_string()),
                dimension: d,
                domain: DomainConfig::default(),
                phi: "norm(x)^eta".into(),
                a: identity(d),
                b: vec!["0".into(); d],
                rho: "norm(x)".into(),
                params: BTreeMap::from([("eta".to_string(), eta)]),
                flags: Flags {
                    smooth_phi: eta == 0.0,
                    smooth_a: true,
                    radial: true,
                    irreducible: true,
                    condition_c: true,
                    // |x|^eta is a Muckenhoupt A_2 weight exactly for -d < eta < d.
                    heat_kernel_bounds: eta > -df && eta < df,
                },
                singularities: if eta == 0.0 { vec![] } else { vec![vec![0.0; d]] },
                kinks: vec![],
                tail_law: Some(TailLaw {
                    c: sphere_area(d) / (df + eta),
                    gamma: df + eta,
                }),
                gauge_bound: None,
                irreducibility_note: Some(
                    "A_2 weight: doubling measure with two-sided Gaussian heat kernel bounds".into(),
                ),
                lab_extent: Some(5.0),
            }
        }
        _ => return Err(ModelError::UnknownModel(name.to_string())),
    };
    Ok(cfg)
}

pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec, ModelError> {
    ModelSpec::from_config(builtin_config(name, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_builds() {
        for n in NAMES {
            builtin_model(n, &BTreeMap::new()).unwrap();
        }
        assert!(matches!(
            builtin_model("nope", &BTreeMap::new()),
            Err(ModelError::UnknownModel(_))
        ));
    }

    #[test]
    fn bm2_fields() {
        let m = builtin_model("bm-2", &BTreeMap::new()).unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(m.phi(&[0.3, 4.0]), 1.0);
        assert_eq!(m.a_sym(&[1.0, 1.0]), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(m.drift_is_zero());
        assert_eq!(m.rho(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn exp_generic_fields() {
        let m = builtin_model("exp-generic", &BTreeMap::new()).unwrap();
        for &x in &[-2.0, 0.0, 1.5] {
            let phi = (-f64::abs(x)).exp();
            assert!((m.phi(&[x]) - phi).abs() < 1e-15);
            let mut b = [0.0];
            m.drift(&[x], &mut b);
            assert!((b[0] - 1.0 / (2.0 * phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_weight_fields() {
        let m = builtin_model(
            "power-weight",
            &BTreeMap::from([("eta".to_string(), 1.0), ("d".to_string(), 2.0)]),
        )
        .unwrap();
        assert!((m.phi(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
        assert!(m.flags().heat_kernel_bounds);
        assert!(builtin_model("power-weight", &BTreeMap::from([("eta".to_string(), -2.0)])).is_err());
    }
}
