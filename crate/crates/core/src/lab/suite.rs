//! Invariant checks over a batch of random generators.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ops::*;
use super::{random_generator, ChainBoundary, GridSpec, Side};
use crate::error::LabError;
use crate::model::builtin_model;

pub const SUITE_TOLERANCES: [(&str, f64); 10] = [
    ("resolvent_identity", 1e-10),
    ("sub_markov", 1e-12),
    ("drift_energy", 1e-12),
    ("notran1", 1e-8),
    ("killed_resolvent", 1e-10),
    ("time_changed_resolvent", 1e-10),
    ("good_g_excess", 1e-12),
    ("good_g_nonpositive", 0.0),
    ("rec3_failed_checks", 0.0),
    ("exhaustion_decrease", 1e-12),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub instances: usize,
    pub sizes: Vec<usize>,
    pub reflecting: usize,
    pub absorbing: usize,
    /// worst value of each residual over the batch
    pub worst: BTreeMap<String, f64>,
    pub exhaustion_models: Vec<String>,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<String> {
        SUITE_TOLERANCES
            .iter()
            .filter(|(k, tol)| self.worst.get(*k).is_none_or(|v| !(*v <= *tol)))
            .map(|(k, _)| k.to_string())
            .collect()
    }
}

fn bump(worst: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = worst.entry(key.to_string()).or_insert(0.0);
    // NaN must surface as a failure
    if v.is_nan() || v > *e {
        *e = v;
    }
}

/// `count` random chains with sizes in 3..=200, alternating boundary kinds,
/// plus domain exhaustion on a few builtin grids.
pub fn invariant_suite(count: usize, seed: u64) -> Result<SuiteReport, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = BTreeMap::new();
    let mut sizes = Vec::with_capacity(count);
    let (mut refl, mut abs) = (0, 0);
    let alphas = [0.1, 1.0, 10.0];
    for i in 0..count {
        let n = if i < 2 { [3, 200][i] } else { rng.gen_range(3..=200) };
        let boundary = if i % 2 == 0 { ChainBoundary::Reflecting } else { ChainBoundary::Absorbing };
        let g = random_generator(n, boundary, rng.gen())?;
        sizes.push(n);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // sub-Markov bounds are for 0 ≤ f ≤ 1
        let unit: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        for (k, &a) in alphas.iter().enumerate() {
            for &b in &alphas[k + 1..] {
                bump(&mut worst, "resolvent_identity", resolvent_identity_residual(&g, a, b, &f)?);
            }
            bump(&mut worst, "sub_markov", sub_markov_violation(&g, a, &unit)?);
        }
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        bump(&mut worst, "drift_energy", diagonal_drift_energy(&g, &u).abs());
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let kr = killed_resolvent(&g, &h, 0.5, &unit)?;
        bump(&mut worst, "killed_resolvent", kr.identity_residual.max(kr.sub_markov_violation));
        let tr = time_changed_resolvent(&g, &h, 0.1, 0.5, &unit)?;
        bump(&mut worst, "time_changed_resolvent", tr.identity_residual.max(tr.sub_markov_violation));
        match boundary {
            ChainBoundary::Absorbing => {
                abs += 1;
                bump(&mut worst, "notran1", verify_notran1(&g, &h, &u)?.relative());
                let good = find_good_g(&g, &vec![1.0; n])?;
                let max_gg = good.potential.iter().cloned().fold(0.0, f64::max);
                bump(&mut worst, "good_g_excess", ((max_gg - good.bound) / good.bound).max(0.0));
                bump(&mut worst, "good_g_nonpositive", good.g.iter().filter(|v| !(**v > 0.0)).count() as f64);
            }
            ChainBoundary::Reflecting => {
                refl += 1;
                let r = rec3_chi(&g, &h, &[1.0, 10.0, 100.0, 1e3, 1e4])?;
                let failed = [r.in_unit_interval, r.monotone, r.energy_bounded, r.vanishing]
                    .iter()
                    .filter(|b| !**b)
                    .count();
                bump(&mut worst, "rec3_failed_checks", failed as f64);
            }
        }
    }
    let models = ["bm-1", "exp-generic", "lebesgue-const-drift", "bm-2"];
    for name in models {
        let m = builtin_model(name, &Default::default())?;
        let cells = rng.gen_range(20..=60);
        let grid = if m.dim == 1 {
            GridSpec::interval(-3.0, 3.0, 2 * cells, Side::Absorbing)
        } else {
            GridSpec::square(3.0, cells, Side::Absorbing)
        };
        let f = |x: &[f64]| 1.0 + (-x.iter().map(|v| v * v).sum::<f64>()).exp();
        let ex = domain_exhaustion(&m, &grid, &[1.0, 2.0, 3.0], 1.0, &f)?;
        bump(&mut worst, "exhaustion_decrease", (-ex.min_increment).max(0.0));
    }
    Ok(SuiteReport {
        instances: count,
        sizes,
        reflecting: refl,
        absorbing: abs,
        worst,
        exhaustion_models: models.iter().map(|s| s.to_string()).collect(),
    })
}
