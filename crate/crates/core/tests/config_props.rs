use proptest::prelude::*;

use stabgen::bounds::TheoremId;
use stabgen::config::{ExperimentConfig, TauSetting};
use stabgen::Error;

const ALGORITHMS: [&str; 4] = ["da-convex", "ogd-convex", "da-strong", "ogd-strong"];

fn render(name: &str, n: usize, tau: Option<usize>, seed: u64, delta: f64, theorem: TheoremId, algo: &str) -> String {
    let tau = tau.map_or("\"auto\"".to_string(), |t| t.to_string());
    format!(
        r#"name = "{name}"
process = "sticky(0.3)"
n_train = {n}
tau = {tau}
seed = {seed}
delta = {delta:?}
theorem = "{}"

[loss]
kind = "ridge"
base = "squared"
lambda_f = 0.5
diameter = 2.0

[algorithm]
name = "{algo}"
"#,
        theorem.as_str()
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn written_fields_read_back(
        name in "[a-z][a-z0-9-]{0,12}",
        n in 1usize..100_000,
        tau_raw in prop::option::of(1usize..100_000),
        seed in any::<u64>(),
        delta in 0.001f64..0.999,
        theorem in prop::sample::select(TheoremId::ALL.to_vec()),
        algo in prop::sample::select(ALGORITHMS.to_vec()),
    ) {
        let tau = tau_raw.map(|t| 1 + (t - 1) % n);
        let cfg = ExperimentConfig::from_toml_str(&render(&name, n, tau, seed, delta, theorem, algo)).unwrap();
        prop_assert_eq!(cfg.name, name);
        prop_assert_eq!(cfg.n_train, n);
        prop_assert_eq!(cfg.tau, tau.map_or(TauSetting::Auto, TauSetting::Fixed));
        prop_assert_eq!(cfg.seed, seed);
        prop_assert_eq!(cfg.delta, delta);
        prop_assert_eq!(cfg.theorem, theorem);
        prop_assert_eq!(cfg.algorithm.name, algo);
    }

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z]{3,10}_x") {
        let base = render("t", 100, None, 1, 0.1, TheoremId::HighprobConvexPhi, "da-convex");
        let top = format!("{key} = 1\n{base}");
        prop_assert!(matches!(ExperimentConfig::from_toml_str(&top), Err(Error::Config(_))));
        let nested = base.replace("diameter = 2.0", &format!("diameter = 2.0\n{key} = 1"));
        prop_assert!(matches!(ExperimentConfig::from_toml_str(&nested), Err(Error::Config(_))));
    }

    #[test]
    fn lags_outside_the_horizon_are_rejected(n in 1usize..10_000, extra in 1usize..1000) {
        for tau in [0, n + extra] {
            let text = render("t", n, Some(tau), 1, 0.1, TheoremId::HighprobConvexPhi, "da-convex");
            prop_assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        }
        let text = render("t", n, None, 1, 0.1, TheoremId::HighprobConvexPhi, "da-convex")
            .replace("tau = \"auto\"", "tau = \"soon\"");
        prop_assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }
}
