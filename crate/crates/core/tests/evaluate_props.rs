mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use stabgen::config::ExperimentConfig;
use stabgen::evaluate::{index_sets, monte_carlo_coverage, Evaluator, EXACT_TOL};
use stabgen::learner::{build_learner, run_online, Algorithm, LearnerParams};
use stabgen::loss::{Domain, LossKind, LossModel};
use stabgen::process::MarkovProcessModel;

fn logistic(model: &MarkovProcessModel) -> LossModel {
    LossModel::for_process(LossKind::Logistic, Domain::centered(model.dim(), 2.0).unwrap(), model).unwrap()
}

fn point(loss: &LossModel, raw: &[f64]) -> DVector<f64> {
    &loss.domain.center + common::into_ball(&raw[..loss.domain.dim()], loss.domain.radius())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn index_sets_partition_the_rounds(n in 1usize..500, tau_raw in 1usize..500) {
        let tau = 1 + (tau_raw - 1) % n;
        let sets = index_sets(n, tau).unwrap();
        prop_assert_eq!(sets.len(), tau);
        let mut rounds: Vec<usize> = Vec::new();
        for (i, set) in sets.iter().enumerate() {
            let expected = n / tau + usize::from(i < n % tau);
            prop_assert_eq!(set.len(), expected);
            prop_assert_eq!(set.clone(), (1..=expected).collect::<Vec<_>>());
            rounds.extend(set.iter().map(|t| (t - 1) * tau + i + 1));
        }
        rounds.sort_unstable();
        prop_assert_eq!(rounds, (1..=n).collect::<Vec<_>>());
        prop_assert!(index_sets(n, 0).is_err());
        prop_assert!(index_sets(n, n + 1).is_err());
    }

    #[test]
    fn conditional_gaps_stay_within_mixing(
        model in common::chain(4, 3),
        a in prop::collection::vec(-1.0f64..1.0, 3),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        tau in 1usize..12,
    ) {
        let st = model.stationary_distribution().unwrap();
        let loss = logistic(&model);
        let ev = Evaluator::new(&model, &st, &loss).unwrap();
        let (w, v) = (point(&loss, &a), point(&loss, &b));
        for s in 0..model.num_states() {
            let check = ev.lemma1_check(&w, &v, s, tau).unwrap();
            prop_assert!(check.holds(), "state {}: {:?}", s, check);
            prop_assert!(check.lhs.abs() <= check.rhs + EXACT_TOL);
            let future = ev.proposition1_check(&w, s, 1 + tau % 5, tau).unwrap();
            prop_assert!(future.holds_within(EXACT_TOL), "state {}: {:?}", s, future);
        }
    }

    #[test]
    fn future_risk_matches_simulation(
        model in common::chain(4, 2),
        a in prop::collection::vec(-1.0f64..1.0, 2),
        k in 1usize..20,
        seed in any::<u64>(),
    ) {
        let st = model.stationary_distribution().unwrap();
        let loss = logistic(&model);
        let ev = Evaluator::new(&model, &st, &loss).unwrap();
        let w = point(&loss, &a);
        let fr = ev.future_risk(&w, 0, k, 4_000, seed).unwrap();
        prop_assert!(fr.agrees, "{:?}", fr);
        prop_assert!((fr.exact - ev.future_risk_exact(&w, 0, k).unwrap()).abs() == 0.0);
    }

    #[test]
    fn block_and_master_decompositions_hold(
        model in common::chain(4, 2),
        seed in any::<u64>(),
        n in 20usize..150,
        tau_raw in 1usize..15,
        ogd in any::<bool>(),
    ) {
        let tau = 1 + (tau_raw - 1) % n;
        let st = model.stationary_distribution().unwrap();
        let loss = logistic(&model);
        let ev = Evaluator::new(&model, &st, &loss).unwrap();
        let path = model.sample_path(n, tau, seed).unwrap();
        let algo = if ogd { Algorithm::OgdConvex } else { Algorithm::DaConvex };
        let mut learner = build_learner(algo, &loss, LearnerParams::default()).unwrap();
        let ledger = run_online(learner.as_mut(), &loss, path.train(), true).unwrap();

        let master = ev.master_inequality_check(&ledger, &path.samples, tau).unwrap();
        prop_assert!(master.holds(loss.lipschitz_g, loss.diameter()), "{:?}", master);

        let blocks = ev.block_decomposition(&ledger, &path.samples, Some(&path.states), tau).unwrap();
        prop_assert!(blocks.holds(), "residual {} excess {:?}", blocks.identity_residual, blocks.max_conditional_excess);
        let by_block: f64 = blocks.z_values.iter().flatten().sum();
        prop_assert!((blocks.m_n - by_block).abs() <= 1e-10 * blocks.m_n.abs().max(1.0));
    }
}

#[test]
fn bad_ftl_bound_is_honored_while_unstable() {
    let text = r#"
name = "bad-ftl"
process = "sticky(0.2)"
n_train = 2000
n_paths = 10
seed = 5
theorem = "highprob-convex-phi"

[loss]
kind = "linear"
diameter = 2.0

[algorithm]
name = "bad-ftl"

[mixing]
kind = "exact"
"#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let spec = cfg.coverage_spec(cfg.seed, cfg.n_paths, Some(1)).unwrap();
    let report = monte_carlo_coverage(&spec).unwrap();
    assert!(report.within_tolerance, "violation fraction {}", report.violation_fraction);
    for run in &report.runs {
        let per_round = run.kappa_sum / run.n as f64;
        assert!(per_round > 0.15, "seed {}: Σκ/n = {per_round}", run.seed);
    }
}
