use std::collections::BTreeMap;

use gdform_core::builtin_model;
use gdform_core::criteria::Verdict;
use gdform_core::pipeline::{classify, ClassifyConfig};

fn verdict(name: &str, params: &[(&str, f64)], irreducible: bool) -> Verdict {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let m = builtin_model(name, &p).unwrap();
    let cfg = ClassifyConfig { irreducible, ..Default::default() };
    classify(&m, &cfg).unwrap().0.classification.verdict
}

#[test]
fn power_weights_in_the_muckenhoupt_window_are_transient() {
    for eta in [0.5, 1.0, 1.5] {
        assert_eq!(verdict("power-weight", &[("d", 2.0), ("eta", eta)], false), Verdict::Transient, "eta={eta}");
    }
}

#[test]
fn flat_plane_is_recurrent_when_irreducible() {
    assert_eq!(verdict("power-weight", &[("d", 2.0), ("eta", 0.0)], true), Verdict::Recurrent);
    assert_eq!(verdict("bm-2", &[], false), Verdict::Recurrent);
}

#[test]
fn three_dimensional_brownian_motion() {
    assert_eq!(verdict("bm-3", &[], false), Verdict::Transient);
}

#[test]
fn one_dimensional_examples() {
    assert_eq!(verdict("exp-generic", &[], false), Verdict::NotRecurrent);
    assert_eq!(verdict("lebesgue-const-drift", &[("b", 1.0)], false), Verdict::NotRecurrent);
    assert_eq!(verdict("lebesgue-const-drift", &[("b", 0.0)], true), Verdict::Recurrent);
    assert_eq!(verdict("bm-1", &[], true), Verdict::Recurrent);
}

#[test]
fn strong_drift_gauss() {
    let v = verdict("gauss-strongdrift", &[], false);
    assert_ne!(v, Verdict::Transient);
}
