use gdform_core::lab::*;
use proptest::prelude::*;

#[test]
fn invariant_suite_on_sixty_generators() {
    let r = invariant_suite(60, 2024).unwrap();
    assert!(r.reflecting >= 25 && r.absorbing >= 25);
    assert!(r.sizes.iter().all(|n| (3..=200).contains(n)));
    assert!(r.failures().is_empty(), "{:?}", r.worst);
}

fn chain() -> impl Strategy<Value = GeneratorMatrix> {
    (3usize..60, any::<bool>(), any::<u64>()).prop_map(|(n, absorbing, seed)| {
        let b = if absorbing { ChainBoundary::Absorbing } else { ChainBoundary::Reflecting };
        random_generator(n, b, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_antisymmetric_in_l2_mu(g in chain(), s in any::<u64>()) {
        let u: Vec<f64> = (0..g.n).map(|i| ((i as u64 ^ s) % 17) as f64 / 8.0 - 1.0).collect();
        prop_assert!(diagonal_drift_energy(&g, &u).abs() < 1e-12);
        prop_assert!((g.energy(&u, &u) - g.energy0(&u, &u)).abs() < 1e-10 * (1.0 + g.energy0(&u, &u)));
    }

    #[test]
    fn resolvent_is_positive_and_sub_markov(g in chain(), alpha in 0.01f64..50.0) {
        let one = vec![1.0; g.n];
        let u = resolvent(&g, alpha, &one).unwrap();
        for v in &u {
            prop_assert!(*v > 0.0 && alpha * v <= 1.0 + 1e-12);
        }
        if !g.has_killing {
            prop_assert!(u.iter().all(|v| (alpha * v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn dichotomy_follows_killing(g in chain()) {
        let one = vec![1.0; g.n];
        let p = potential_dichotomy(&g, &one).unwrap();
        prop_assert_eq!(p.is_finite(), g.has_killing);
    }

    #[test]
    fn reversal_is_the_adjoint(g in chain()) {
        let r = g.reversed();
        let d = g.adjoint().axpby(1.0, &r.l, -1.0);
        prop_assert!(d.max_abs() <= 1e-12 * g.l.max_abs());
    }
}
