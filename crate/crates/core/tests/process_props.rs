mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use stabgen::linalg::total_variation;
use stabgen::process::{iid_uniform, sticky_features, sticky_process, three_state_demo, MarkovProcessModel};

fn shipped() -> Vec<MarkovProcessModel> {
    vec![
        sticky_process(0.2).unwrap(),
        three_state_demo().unwrap(),
        iid_uniform().unwrap(),
        sticky_features(0.2, 2, 8, 0).unwrap(),
    ]
}

/// `initial · P^k` by repeated vector-matrix products.
fn step_law(model: &MarkovProcessModel, start: usize, k: usize) -> DVector<f64> {
    let m = model.num_states();
    let mut law = DVector::zeros(m);
    law[start] = 1.0;
    for _ in 0..k {
        law = model.transition().tr_mul(&law);
    }
    law
}

#[test]
fn shipped_chains_mixing_monotone_and_dominated() {
    for model in shipped() {
        let st = model.stationary_distribution().unwrap();
        let (mut prev_phi, mut prev_beta) = (f64::INFINITY, f64::INFINITY);
        for k in 1..=50 {
            let phi = model.phi_coefficient(&st, k).unwrap();
            let beta = model.beta_coefficient(&st, k).unwrap();
            assert!(phi <= prev_phi + 1e-12, "{}: phi rises at {k}", model.name);
            assert!(beta <= prev_beta + 1e-12, "{}: beta rises at {k}", model.name);
            assert!(beta <= phi + 1e-12, "{}: beta > phi at {k}", model.name);
            prev_phi = phi;
            prev_beta = beta;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_monotone_and_dominated(model in common::chain(5, 3)) {
        let st = model.stationary_distribution().unwrap();
        let (mut prev_phi, mut prev_beta) = (f64::INFINITY, f64::INFINITY);
        for k in 1..=50 {
            let phi = model.phi_coefficient(&st, k).unwrap();
            let beta = model.beta_coefficient(&st, k).unwrap();
            prop_assert!(phi <= prev_phi + 1e-12);
            prop_assert!(beta <= prev_beta + 1e-12);
            prop_assert!(beta <= phi + 1e-12);
            prev_phi = phi;
            prev_beta = beta;
        }
    }

    #[test]
    fn phi_is_worst_state_l1_distance_to_stationary(model in common::chain(4, 2), k in 1usize..15) {
        // distinct emissions, so distances over states equal distances over samples
        let st = model.stationary_distribution().unwrap();
        let worst = (0..model.num_states())
            .map(|s| 2.0 * total_variation(step_law(&model, s, k).as_slice(), st.pi.as_slice()))
            .fold(0.0, f64::max);
        prop_assert!((model.phi_coefficient(&st, k).unwrap() - worst).abs() < 1e-12);
    }

    #[test]
    fn stationary_law_is_invariant(model in common::chain(6, 2)) {
        let st = model.stationary_distribution().unwrap();
        prop_assert!((st.pi.sum() - 1.0).abs() < 1e-12);
        prop_assert!(st.pi.iter().all(|p| *p > 0.0));
        let moved = model.transition().tr_mul(&st.pi);
        prop_assert!((moved - &st.pi).amax() < 1e-10);
    }

    #[test]
    fn conditional_law_is_a_matrix_power_row(model in common::chain(5, 2), s in 0usize..5, k in 1usize..25) {
        let s = s % model.num_states();
        let row = model.conditional_distribution(s, k).unwrap();
        prop_assert!(row.iter().all(|p| *p >= 0.0));
        prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        prop_assert!((row - step_law(&model, s, k)).amax() < 1e-12);
    }

    #[test]
    fn sticky_phi_is_exact(p in 0.01f64..1.0, k in 1usize..60) {
        let model = sticky_process(p).unwrap();
        let st = model.stationary_distribution().unwrap();
        let phi = model.phi_coefficient(&st, k).unwrap();
        prop_assert!((phi - (1.0 - p).powi(k as i32)).abs() <= 1e-10);
    }

    #[test]
    fn sample_path_is_a_pure_function(model in common::chain(4, 2), seed in any::<u64>(), n in 1usize..200, k in 0usize..20) {
        let a = model.sample_path(n, k, seed).unwrap();
        let b = model.sample_path(n, k, seed).unwrap();
        prop_assert_eq!(&a.states, &b.states);
        prop_assert_eq!(&a.samples, &b.samples);
        prop_assert_eq!(a.states.len(), n + k);
        prop_assert_eq!(a.train().len(), n);
        prop_assert_eq!(a.test().len(), k);
        for (s, z) in a.states.iter().zip(&a.samples) {
            prop_assert_eq!(z, model.emission(*s));
        }
        // impossible transitions never occur: every observed move has positive probability
        for w in a.states.windows(2) {
            prop_assert!(model.transition()[(w[0], w[1])] > 0.0);
        }
    }
}
