use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
name = "small"
process = "3state-demo"
n_train = 300
n_test = 5
n_paths = 6
seed = 11
theorem = "highprob-convex-phi"

[loss]
kind = "logistic"
diameter = 2.0

[algorithm]
name = "da-convex"
"#;

fn stabgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabgen"))
        .args(args)
        .env_remove("STABGEN_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn train_output_is_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "3", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = stabgen(&["--config", &cfg, "--workers", workers, "--out", out.to_str().unwrap(), "train"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for file in ["runs.csv", "kappa.csv", "predictors.csv", "summary.json"] {
        let first = read(&outputs[0], file);
        for other in &outputs[1..] {
            assert_eq!(first, read(other, file), "{file} differs");
        }
    }
    let runs = String::from_utf8(read(&outputs[0], "runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(
        lines.next(),
        Some("seed,n,algorithm,regret,kappa_sum,excess_risk_exact,bound_total,violated")
    );
    assert_eq!(lines.count(), 6);
    let summary: serde_json::Value = serde_json::from_slice(&read(&outputs[0], "summary.json")).unwrap();
    for key in ["violation_fraction", "mean_excess", "bound_mean"] {
        assert!(summary[key].is_number(), "summary lacks {key}");
    }
}

#[test]
fn worker_count_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = stabgen(&["--config", &cfg, "--out", a.to_str().unwrap(), "simulate"]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_stabgen"))
        .args(["--config", &cfg, "--out", b.to_str().unwrap(), "simulate"])
        .env("STABGEN_WORKERS", "4")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read(&a, "paths.csv"), read(&b, "paths.csv"));
    assert_eq!(read(&a, "mixing.csv"), read(&b, "mixing.csv"));

    let o = Command::new(env!("CARGO_BIN_EXE_stabgen"))
        .args(["--config", &cfg, "simulate"])
        .env("STABGEN_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_the_exact_mixing_table() {
    let tmp = TempDir::new().unwrap();
    let sticky = SMALL.replace("3state-demo", "sticky(0.2)");
    let cfg = write_config(tmp.path(), "sticky.toml", &sticky);
    let out = tmp.path().join("sticky");
    assert!(stabgen(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]).status.success());
    let table = String::from_utf8(read(&out, "mixing.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("k,phi,beta"));
    for (k, line) in lines.take(20).enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let expected = 0.8f64.powi(k as i32 + 1);
        assert!((cols[1] - expected).abs() < 1e-12, "k = {}: {}", k + 1, cols[1]);
    }

    let iid = SMALL.replace("3state-demo", "iid-uniform");
    let cfg = write_config(tmp.path(), "iid.toml", &iid);
    let out = tmp.path().join("iid");
    assert!(stabgen(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]).status.success());
    let table = String::from_utf8(read(&out, "mixing.csv")).unwrap();
    for line in table.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1].abs() < 1e-12 && cols[2].abs() < 1e-12);
    }
}

#[test]
fn bounds_json_has_the_documented_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let o = stabgen(&["--config", &cfg, "--format", "json", "bounds", "--tau-max", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["theorem_id"], "highprob-convex-phi");
    assert!(v["tau"].as_u64().unwrap() >= 1);
    for term in ["regret_term", "stability_term", "martingale_term", "mixing_term", "boundary_term"] {
        assert!(v["terms"][term].is_number(), "missing terms.{term}");
    }
    let terms: f64 = v["terms"].as_object().unwrap().values().map(|t| t.as_f64().unwrap()).sum();
    assert!((terms - v["total"].as_f64().unwrap()).abs() < 1e-12);
    assert!((v["delta_effective"].as_f64().unwrap() - 0.9).abs() < 1e-15);
    assert_eq!(v["grid"].as_array().unwrap().len(), 5);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(stabgen(&["train"]).status.code(), Some(2));
    assert_eq!(stabgen(&["--config", "/does/not/exist.toml", "train"]).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{SMALL}\nbogus_key = 1\n"));
    assert_eq!(stabgen(&["--config", &unknown, "train"]).status.code(), Some(2));
    let bad_process = write_config(tmp.path(), "bad.toml", &SMALL.replace("3state-demo", "sticky(3)"));
    assert_eq!(stabgen(&["--config", &bad_process, "train"]).status.code(), Some(2));
    assert_eq!(stabgen(&["experiment", "E42"]).status.code(), Some(2));
    assert_eq!(stabgen(&["verify", "nonsense"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_reports_injected_faults() {
    let tmp = TempDir::new().unwrap();
    let o = stabgen(&["--paths", "2", "--format", "json", "verify", "iid"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    let assertions = v["assertions"].as_array().unwrap();
    assert!(!assertions.is_empty());
    assert!(assertions.iter().all(|a| a["min_margin"].is_number() && a["checks"].as_u64() > Some(0)));

    let out = tmp.path().join("verify");
    let o = stabgen(&["--paths", "1", "--out", out.to_str().unwrap(), "verify", "lemma1", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "verify.json")).unwrap();
    assert_eq!(v["fault_injected"], true);
    assert_eq!(v["passed"], false);
}

#[test]
fn experiment_writes_its_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("exp");
    let o = stabgen(&["--paths", "20", "--out", out.to_str().unwrap(), "experiment", "e1"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS E1c")), "{stdout}");
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "E1.json")).unwrap();
    assert_eq!(v["name"], "E1");
    assert!(v["criteria"].as_array().unwrap().len() >= 3);
}

fn check_schema(schema: &str, doc: &serde_json::Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(schema);
    let schema: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
}

fn read_json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, name)).unwrap()
}

#[test]
fn json_outputs_match_the_shipped_schemas() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("json");
    let o = stabgen(&["--config", &cfg, "--format", "json", "--out", out.to_str().unwrap(), "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&out, "summary.json");
    check_schema("summary.schema.json", &summary);
    let mut tampered = summary.clone();
    tampered["violation_fraction"] = serde_json::json!("high");
    let schema: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas/summary.schema.json")).unwrap())
            .unwrap();
    assert!(!jsonschema::validator_for(&schema).unwrap().is_valid(&tampered));
    check_schema("runs.schema.json", &read_json(&out, "runs.json"));

    let o = stabgen(&["--config", &cfg, "--format", "json", "--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success());
    check_schema("paths.schema.json", &read_json(&out, "paths.json"));
    check_schema("mixing.schema.json", &read_json(&out, "mixing.json"));

    let o = stabgen(&["--config", &cfg, "--format", "json", "bounds", "--tau-max", "4"]);
    assert!(o.status.success());
    check_schema("bounds.schema.json", &serde_json::from_slice(&o.stdout).unwrap());

    let o = stabgen(&["--paths", "1", "--out", out.to_str().unwrap(), "verify", "iid"]);
    assert_eq!(o.status.code(), Some(0));
    check_schema("verify.schema.json", &read_json(&out, "verify.json"));

    let o = stabgen(&["--paths", "20", "--out", out.to_str().unwrap(), "experiment", "e1"]);
    assert!(o.status.code().is_some());
    check_schema("experiment.schema.json", &read_json(&out, "E1.json"));
}
