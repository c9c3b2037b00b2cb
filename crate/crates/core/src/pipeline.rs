//! validate → profiles → criteria (+ the 1-d scale test) → merged verdict.

use serde::{Deserialize, Serialize};

use crate::criteria::{
    merge, test_growth_bounds, test_recurrence_volume, test_transience_symmetric, Classification, LimitRules,
    TailDeclaration,
};
use crate::error::{Error, Scale1dError};
use crate::model::{validate_model, ModelSpec, ValidationReport};
use crate::quadrature::QuadConfig;
use crate::scale_1d::{scale_classification, TailConfig};
use crate::volume_growth::{build_profiles, compute_a, Profiles, VolumeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub r_max: f64,
    /// radii in the geometric profile grid
    pub grid: usize,
    /// declare strict irreducibility in addition to the model flag
    pub irreducible: bool,
    /// divergence-free tolerance for validation
    pub tol: f64,
    pub n_test_functions: usize,
    pub rules: LimitRules,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            r_max: 1e4,
            grid: 121,
            irreducible: false,
            tol: 1e-6,
            n_test_functions: 8,
            rules: LimitRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub model: String,
    pub dimension: usize,
    pub classification: Classification,
    pub tests: Vec<Classification>,
    /// tests that did not apply, with the reason
    pub skipped: Vec<(String, String)>,
    pub validation: ValidationReport,
}

/// Runs every applicable test on one model and merges the verdicts; a
/// contradiction between tests is an error.
pub fn classify(model: &ModelSpec, cfg: &ClassifyConfig) -> Result<(ClassifyReport, Profiles), Error> {
    let validation = validate_model(model, cfg.n_test_functions, cfg.tol)?;
    let profiles = build_profiles(model, cfg.r_max, cfg.grid, &VolumeConfig::default())?;
    let ns: Vec<f64> = profiles.v.radii.iter().copied().filter(|r| *r >= 1.0).collect();
    let a = compute_a(&profiles.v, &ns, &QuadConfig::default())?;
    let irreducible = cfg.irreducible || model.flags().irreducible;
    let mut tests = vec![
        test_recurrence_volume(&profiles.v2, &a, irreducible, &cfg.rules)?,
        test_growth_bounds(&profiles.v1, &profiles.v2, &profiles.v, &cfg.rules)?,
    ];
    let mut skipped = Vec::new();
    let tail = model.config.tail_law.as_ref().map(|t| TailDeclaration::Power { c: t.c, gamma: t.gamma });
    tests.push(test_transience_symmetric(
        &profiles.v1,
        tail.as_ref(),
        model.flags().heat_kernel_bounds,
        &cfg.rules,
    )?);
    if model.dim == 1 {
        match scale_classification(model, &TailConfig::default()) {
            Ok((c, _)) => tests.push(c),
            Err(Scale1dError::NotApplicable(why)) => skipped.push(("scale_1d".to_string(), why)),
            Err(e) => return Err(e.into()),
        }
    } else {
        skipped.push(("scale_1d".to_string(), format!("dimension {} is not 1", model.dim)));
    }
    let classification = merge(&tests)?;
    Ok((
        ClassifyReport {
            model: model.name().to_string(),
            dimension: model.dim,
            classification,
            tests,
            skipped,
            validation,
        },
        profiles,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::Verdict;
    use crate::model::builtin_model;

    #[test]
    fn brownian_plane_is_recurrent() {
        let m = builtin_model("bm-2", &Default::default()).unwrap();
        let (r, _) = classify(&m, &ClassifyConfig::default()).unwrap();
        assert_eq!(r.classification.verdict, Verdict::Recurrent);
    }

    #[test]
    fn exp_generic_not_recurrent() {
        let m = builtin_model("exp-generic", &Default::default()).unwrap();
        let (r, _) = classify(&m, &ClassifyConfig::default()).unwrap();
        assert_eq!(r.classification.verdict, Verdict::NotRecurrent);
        assert!(r.tests.iter().any(|t| t.criterion_id == "scale_1d"));
    }
}
