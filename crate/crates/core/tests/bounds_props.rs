use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stabgen::bounds::{
    azuma_tail, freedman_failure_mass, freedman_threshold, kappa_sum_inv_linear, kappa_sum_inv_sqrt, optimize_tau,
    BoundInputs, TheoremId,
};
use stabgen::process::MixingProfile;

fn profile() -> impl Strategy<Value = MixingProfile> {
    prop_oneof![
        Just(MixingProfile::iid()),
        (0.1f64..2.0, 0.05f64..2.0, 0.5f64..2.0).prop_map(|(a, b, s)| MixingProfile::geometric(a, b, s).unwrap()),
        (0.1f64..2.0, 0.5f64..3.0).prop_map(|(a, t)| MixingProfile::algebraic(a, t).unwrap()),
        prop::collection::vec(0.0f64..1.0, 1..40).prop_map(|mut v| {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let beta = v.iter().map(|p| p * 0.7).collect();
            MixingProfile::tabulated(v, beta).unwrap()
        }),
    ]
}

fn inputs() -> impl Strategy<Value = BoundInputs> {
    (
        (3usize..400, 0.1f64..5.0, 0.1f64..5.0, 0.001f64..0.3, profile()),
        (0.0f64..1.0, -0.5f64..1.0, 0.01f64..2.0, 0.01f64..2.0, 1usize..6),
        (0.1f64..2.0, 0.1f64..2.0, 0.01f64..1.0, 0.0f64..4.0, 1usize..50),
    )
        .prop_map(|((n, g, r, delta, mixing), (kappa, regret, lambda, l, d), (sigma, x, lmin, wsq, k))| {
            let mut inp = BoundInputs::new(n, g, r, mixing);
            inp.delta = delta;
            inp.kappa_sum = kappa * r * n as f64;
            inp.regret_value = regret * g * r * n as f64;
            inp.lambda = lambda;
            inp.l = l;
            inp.d = d;
            inp.sigma = sigma;
            inp.x = x;
            inp.lambda_min_cov = lmin;
            inp.w_star_norm_sq = wsq;
            inp.k_test = k;
            inp
        })
}

/// Inputs at horizon `n` with the regret and stability growth of the
/// learner the theorem is stated for. The test horizon grows with `n`;
/// with a fixed one the `(τ−1)GR/k` term rises with `τ(n)`.
fn realistic(theorem: TheoremId, n: usize, mixing: MixingProfile) -> BoundInputs {
    let (g, r) = (1.0, 2.0);
    let mut inp = BoundInputs::new(n, g, r, mixing);
    inp.delta = 0.05;
    inp.k_test = n;
    inp.l = 1.0;
    inp.sigma = 0.2;
    inp.x = 1.0;
    inp.d = 2;
    inp.lambda_min_cov = 0.3;
    inp.w_star_norm_sq = 1.0;
    match theorem {
        TheoremId::HighprobStrongPhi | TheoremId::HighprobStrongBeta => {
            inp.lambda = 0.5;
            inp.kappa_sum = kappa_sum_inv_linear(g / inp.lambda, n);
            inp.regret_value = g * g / inp.lambda * (n as f64).ln();
        }
        _ => {
            inp.kappa_sum = kappa_sum_inv_sqrt(r, n);
            inp.regret_value = 1.5 * g * r * (n as f64).sqrt();
        }
    }
    inp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn total_is_the_sum_of_its_terms(inp in inputs(), tau in 1usize..60) {
        for th in TheoremId::ALL {
            let Ok(rep) = th.evaluate(&inp, tau) else { continue };
            let t = &rep.terms;
            let by_hand = t.regret_term + t.stability_term + t.martingale_term + t.mixing_term
                + t.boundary_term + t.comparator_term;
            prop_assert_eq!(rep.total, by_hand);
            prop_assert_eq!(rep.tau, tau);
            prop_assert_eq!(rep.theorem_id.as_str(), th.as_str());
            prop_assert!(rep.delta_effective <= 1.0);
        }
    }

    #[test]
    fn beta_versions_dominate_when_the_coefficients_agree(
        inp in inputs(),
        table in prop::collection::vec(0.0f64..1.0, 1..30),
        tau in 1usize..40,
    ) {
        let mut table = table;
        table.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut inp = inp;
        inp.mixing = MixingProfile::tabulated(table.clone(), table).unwrap();
        let pairs = [
            (TheoremId::HighprobConvexPhi, TheoremId::HighprobConvexBeta),
            (TheoremId::HighprobStrongPhi, TheoremId::HighprobStrongBeta),
        ];
        for (phi, beta) in pairs {
            let (Ok(a), Ok(b)) = (phi.evaluate(&inp, tau), beta.evaluate(&inp, tau)) else { continue };
            prop_assert!(b.total >= a.total, "{}: {} < {}", beta.as_str(), b.total, a.total);
            prop_assert!(b.delta_effective <= a.delta_effective);
        }
    }

    #[test]
    fn grid_optimum_never_exceeds_the_closed_form(inp in inputs()) {
        for th in TheoremId::ALL {
            let Ok(choice) = optimize_tau(th, &inp) else { continue };
            prop_assert!(choice.tau >= 1 && choice.tau <= inp.n);
            if let Some(cf) = &choice.closed_form_report {
                prop_assert!(choice.report.total <= cf.total);
                prop_assert!(cf.tau >= 1 && cf.tau <= inp.n);
            }
        }
    }

    #[test]
    fn iid_inputs_optimize_at_lag_one(inp in inputs()) {
        let mut inp = inp;
        inp.mixing = MixingProfile::iid();
        for th in TheoremId::ALL {
            let Ok(choice) = optimize_tau(th, &inp) else { continue };
            prop_assert_eq!(choice.tau, 1, "{}", th.as_str());
            prop_assert_eq!(choice.closed_form_tau, Some(1));
            prop_assert_eq!(choice.report.terms.mixing_term, 0.0);
        }
    }

    #[test]
    fn iid_lag_one_convex_bound_is_regret_plus_martingale(inp in inputs()) {
        let mut inp = inp;
        inp.mixing = MixingProfile::iid();
        let rep = TheoremId::HighprobConvexPhi.evaluate(&inp, 1).unwrap();
        let n = inp.n as f64;
        let by_hand = inp.regret_value / n + 2.0 * inp.g * inp.r * (2.0 / n * (1.0 / inp.delta).ln()).sqrt();
        prop_assert!((rep.total - by_hand).abs() <= 1e-12 * by_hand.abs().max(1.0));
        prop_assert_eq!(rep.terms.stability_term, 0.0);
        prop_assert_eq!(rep.terms.mixing_term, 0.0);
        prop_assert_eq!(rep.terms.boundary_term, 0.0);
    }

    #[test]
    fn azuma_tail_is_gaussian_in_the_deviation(
        b in 0.01f64..10.0,
        n in 1usize..10_000,
        tau in 1usize..100,
        gamma in 0.0f64..5.0,
    ) {
        prop_assert_eq!(azuma_tail(b, n, tau, 0.0), 1.0);
        let one = azuma_tail(b, n, tau, gamma);
        prop_assert!(one > 0.0 || gamma > 0.0);
        prop_assert!(one <= 1.0);
        let expected = -(tau as f64) * gamma * gamma / (8.0 * n as f64 * b * b);
        prop_assert!((one.ln() - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        let double = azuma_tail(b, n, tau, 2.0 * gamma);
        if one > 1e-300 && double > 1e-300 {
            prop_assert!((double.ln() - 4.0 * one.ln()).abs() <= 1e-9 * one.ln().abs().max(1.0));
        }
    }

    #[test]
    fn freedman_threshold_at_zero_variance(b in 0.01f64..10.0, delta in 1e-6f64..0.36, n in 3usize..10_000) {
        let log = (1.0 / delta).ln();
        let t = freedman_threshold(0.0, b, delta, n).unwrap();
        prop_assert!((t - 3.0 * b * log).abs() <= 1e-12 * t.max(1.0));
        let v = (3.0 * b).powi(2) * log;
        let big = freedman_threshold(4.0 * v, b, delta, n).unwrap();
        prop_assert!((big - 2.0 * (4.0 * v).sqrt() * log.sqrt()).abs() <= 1e-12 * big.max(1.0));
    }
}

#[test]
fn bounds_shrink_with_n_at_the_closed_form_lag() {
    let profiles = [
        MixingProfile::geometric(1.0, -(0.8f64).ln(), 1.0).unwrap(),
        MixingProfile::geometric(2.0, 0.05, 1.0).unwrap(),
        MixingProfile::geometric(1.0, 0.3, 0.5).unwrap(),
    ];
    let horizons = [100, 300, 1_000, 3_000, 10_000, 30_000, 100_000];
    for mixing in &profiles {
        for th in TheoremId::ALL {
            let mut prev = f64::INFINITY;
            for &n in &horizons {
                let inp = realistic(th, n, mixing.clone());
                let tau = stabgen::bounds::closed_form_tau(th, &inp).unwrap();
                // a lag clamped to n is not the closed form; stretched profiles
                // stay clamped (and vacuous) up to n ≈ 10³
                if tau == n {
                    continue;
                }
                let total = th.evaluate(&inp, tau).unwrap().total;
                assert!(total <= prev, "{} n = {n}: {total} > {prev}", th.as_str());
                prev = total;
            }
        }
    }
    let clamped = realistic(TheoremId::ExpectedConvex, 1_000, profiles[2].clone());
    assert_eq!(stabgen::bounds::closed_form_tau(TheoremId::ExpectedConvex, &clamped), Some(1_000));
}

/// Fraction of `runs` martingales of `len` steps, built by `walk`, whose
/// final value reaches `level`.
fn exceedance<F>(runs: usize, seed: u64, level: f64, mut walk: F) -> f64
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..runs).filter(|_| walk(&mut rng) >= level).count();
    hits as f64 / runs as f64
}

#[test]
fn azuma_tail_covers_simulated_block_sums() {
    let runs = 10_000;
    for (b, n, tau, gamma) in [(1.0, 400, 4, 25.0), (0.5, 600, 3, 20.0), (2.0, 90, 9, 18.0)] {
        let len = n / tau;
        // worst-case increments: ±2b with a sign chosen by a fair coin
        let freq = exceedance(runs, 17, gamma, |rng| {
            (0..len).map(|_| if rng.random::<bool>() { 2.0 * b } else { -2.0 * b }).sum::<f64>()
        });
        let bound = azuma_tail(b, n, tau, gamma);
        let se = (bound * (1.0 - bound) / runs as f64).sqrt();
        assert!(freq <= bound + 3.0 * se, "b = {b}: {freq} > {bound}");
    }
}

#[test]
fn freedman_threshold_covers_simulated_martingales() {
    let runs = 10_000;
    for (b, n, delta) in [(1.0, 200, 0.02), (0.5, 500, 0.05), (2.0, 50, 0.1)] {
        let v = n as f64 * b * b;
        let level = freedman_threshold(v, b, delta, n).unwrap();
        // increments shrink after the walk goes positive, so the variance is path dependent
        let freq = exceedance(runs, 29, level, |rng| {
            let mut s = 0.0;
            for _ in 0..n {
                let scale = if s > 0.0 { 0.5 * b } else { b };
                s += if rng.random::<bool>() { scale } else { -scale };
            }
            s
        });
        let mass = freedman_failure_mass(delta, n);
        assert!(freq <= mass.min(1.0), "b = {b}: {freq} > {mass}");
    }
}
