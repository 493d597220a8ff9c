use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use stabgen::bounds::{auto_tau, optimize_tau, BoundReport, TheoremId};
use stabgen::config::{ExperimentConfig, ResolvedExperiment, EXACT_TABLE_MAX};
use stabgen::evaluate::{bound_inputs, coverage_run, summarize, CoverageSpec, Evaluator};
use stabgen::experiments::{run_experiment, ExperimentOptions};
use stabgen::parallel::map_indexed;
use stabgen::verify::{run_suite, VerifyOptions};

use crate::output::{csv, header, json, num, write};
use crate::{Cli, CliError, Command, Format};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Train => train(cli),
        Command::Bounds { theorem, tau_max } => bounds(cli, theorem.as_deref(), *tau_max),
        Command::Verify { suite, inject_fault } => verify(cli, suite, *inject_fault),
        Command::Experiment { name } => experiment(cli, name),
    }
}

fn config_error(e: stabgen::Error) -> CliError {
    match e {
        stabgen::Error::Config(m) => CliError::Config(m),
        other => CliError::Config(other.to_string()),
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    res: ResolvedExperiment,
    seed: u64,
    paths: usize,
    out: PathBuf,
}

/// Loads, validates and resolves the config; every failure here is a
/// config error.
fn load(cli: &Cli) -> Result<Loaded, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let cfg = ExperimentConfig::load(path).map_err(|e| match e {
        stabgen::Error::Io(io) => CliError::Config(format!("{}: {io}", path.display())),
        other => config_error(other),
    })?;
    let res = cfg.resolve().map_err(config_error)?;
    if cli.paths == Some(0) {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    Ok(Loaded {
        seed: cli.seed.unwrap_or(cfg.seed),
        paths: cli.paths.unwrap_or(cfg.n_paths),
        out: cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
        cfg,
        res,
    })
}

fn spec(l: &Loaded, cli: &Cli) -> Result<CoverageSpec, CliError> {
    l.cfg.coverage_spec(l.seed, l.paths, cli.workers).map_err(config_error)
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let l = load(cli)?;
    let model = &l.res.model;
    let (n, k) = (l.cfg.n_train, l.cfg.n_test);
    let paths = map_indexed(cli.workers, l.paths, |r| model.sample_path(n, k, l.seed.wrapping_add(r as u64)))?;
    let k_max = l.cfg.mixing.k_max.unwrap_or(n.min(EXACT_TABLE_MAX)).max(1);
    let table = model.mixing_table(&l.res.stationary, k_max);
    let d = model.dim();

    let written = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut cols = header(&["path", "seed", "t", "split", "state"]);
            cols.extend((1..=d).map(|j| format!("x{j}")));
            cols.push("y".into());
            let rows = paths.iter().enumerate().flat_map(|(r, p)| {
                p.states.iter().zip(&p.samples).enumerate().map(move |(i, (s, z))| {
                    let split = if i < p.n_train { "train" } else { "test" };
                    let mut row = vec![r.to_string(), p.seed.to_string(), (i + 1).to_string(), split.into(), s.to_string()];
                    row.extend(z.x.iter().map(|v| num(*v)));
                    row.push(z.y.map(num).unwrap_or_default());
                    row
                })
            });
            let table_rows = table
                .iter()
                .enumerate()
                .map(|(i, (phi, beta))| vec![(i + 1).to_string(), num(*phi), num(*beta)]);
            vec![
                write(&l.out, "paths.csv", &csv(&cols, rows))?,
                write(&l.out, "mixing.csv", &csv(&header(&["k", "phi", "beta"]), table_rows))?,
            ]
        }
        Format::Json => {
            let paths_json: Vec<_> = paths
                .iter()
                .enumerate()
                .map(|(r, p)| {
                    json!({
                        "path": r,
                        "seed": p.seed,
                        "n_train": p.n_train,
                        "n_test": p.n_test,
                        "states": p.states,
                        "x": p.samples.iter().map(|z| z.x.as_slice().to_vec()).collect::<Vec<_>>(),
                        "y": p.samples.iter().map(|z| z.y).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let table_json: Vec<_> = table
                .iter()
                .enumerate()
                .map(|(i, (phi, beta))| json!({ "k": i + 1, "phi": phi, "beta": beta }))
                .collect();
            vec![
                write(&l.out, "paths.json", &json(&paths_json)?)?,
                write(&l.out, "mixing.json", &json(&table_json)?)?,
            ]
        }
    };
    for p in written {
        outln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    name: &'a str,
    theorem_id: String,
    algorithm: &'a str,
    n_train: usize,
    n_paths: usize,
    seed: u64,
    tau: usize,
    delta_effective: f64,
    violation_fraction: f64,
    mean_excess: f64,
    bound_mean: f64,
    failure_allowance: f64,
    tolerance: f64,
    within_tolerance: bool,
}

fn train(cli: &Cli) -> Result<(), CliError> {
    let l = load(cli)?;
    let spec = spec(&l, cli)?;
    let ev = Evaluator::new(&spec.model, &l.res.stationary, &spec.loss)?;
    let runs = map_indexed(cli.workers, spec.n_paths, |r| coverage_run(&spec, &ev, r))?;
    let (records, ledgers): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let report = summarize(spec.theorem, records.clone());
    let first = &records[0];
    let summary = TrainSummary {
        name: &l.cfg.name,
        theorem_id: report.theorem_id.clone(),
        algorithm: spec.algorithm.as_str(),
        n_train: spec.n_train,
        n_paths: spec.n_paths,
        seed: l.seed,
        tau: first.tau,
        delta_effective: first.delta_effective,
        violation_fraction: report.violation_fraction,
        mean_excess: report.mean_excess,
        bound_mean: report.bound_mean,
        failure_allowance: report.failure_allowance,
        tolerance: report.tolerance,
        within_tolerance: report.within_tolerance,
    };

    let mut written = Vec::new();
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let cols = header(&[
                "seed",
                "n",
                "algorithm",
                "regret",
                "kappa_sum",
                "excess_risk_exact",
                "bound_total",
                "violated",
            ]);
            let rows = records.iter().map(|r| {
                vec![
                    r.seed.to_string(),
                    r.n.to_string(),
                    r.algorithm.clone(),
                    num(r.regret),
                    num(r.kappa_sum),
                    num(r.excess_risk_exact),
                    num(r.bound_total),
                    r.violated.to_string(),
                ]
            });
            written.push(write(&l.out, "runs.csv", &csv(&cols, rows))?);

            let kappa_rows = records.iter().zip(&ledgers).flat_map(|(r, led)| {
                led.stability_seq
                    .iter()
                    .enumerate()
                    .map(move |(t, k)| vec![r.seed.to_string(), (t + 1).to_string(), num(*k)])
            });
            written.push(write(&l.out, "kappa.csv", &csv(&header(&["seed", "t", "kappa"]), kappa_rows))?);

            let mut cols = header(&["seed"]);
            cols.extend((1..=spec.loss.domain.dim()).map(|j| format!("w{j}")));
            let rows = records.iter().zip(&ledgers).map(|(r, led)| {
                let mut row = vec![r.seed.to_string()];
                row.extend(led.averaged_predictor().iter().map(|v| num(*v)));
                row
            });
            written.push(write(&l.out, "predictors.csv", &csv(&cols, rows))?);
        }
        Format::Json => {
            let runs: Vec<_> = records
                .iter()
                .zip(&ledgers)
                .map(|(r, led)| {
                    json!({
                        "seed": r.seed,
                        "n": r.n,
                        "algorithm": r.algorithm,
                        "regret": r.regret,
                        "kappa_sum": r.kappa_sum,
                        "excess_risk_exact": r.excess_risk_exact,
                        "bound_total": r.bound_total,
                        "violated": r.violated,
                        "tau": r.tau,
                        "delta_effective": r.delta_effective,
                        "kappa": led.stability_seq,
                        "predictor": led.averaged_predictor().as_slice(),
                    })
                })
                .collect();
            written.push(write(&l.out, "runs.json", &json(&runs)?)?);
        }
    }
    written.push(write(&l.out, "summary.json", &json(&summary)?)?);
    for p in written {
        outln!("wrote {}", p.display());
    }
    outln!(
        "violation fraction {} over {} paths (tolerance {}), mean excess {}, mean bound {}",
        summary.violation_fraction, summary.n_paths, summary.tolerance, summary.mean_excess, summary.bound_mean
    );
    Ok(())
}

fn bounds(cli: &Cli, theorem: Option<&str>, tau_max: usize) -> Result<(), CliError> {
    let l = load(cli)?;
    let mut spec = spec(&l, cli)?;
    if let Some(t) = theorem {
        spec.theorem = t.parse::<TheoremId>()?;
    }
    let ev = Evaluator::new(&spec.model, &l.res.stationary, &spec.loss)?;
    let (record, _) = coverage_run(&spec, &ev, 0)?;
    let inp = bound_inputs(&spec, ev.stationary, &ev.w_star, record.regret, record.kappa_sum);
    let th = spec.theorem;
    let tau = match spec.tau {
        Some(t) => t,
        None => auto_tau(th, &inp)?,
    };
    let chosen = th.evaluate(&inp, tau)?;
    let best = optimize_tau(th, &inp)?;
    let grid: Vec<BoundReport> = (1..=tau_max.min(spec.n_train).max(1))
        .map(|t| th.evaluate(&inp, t))
        .collect::<Result<_, _>>()?;

    match cli.format {
        Some(Format::Json) => {
            let value = json!({
                "theorem_id": chosen.theorem_id,
                "tau": chosen.tau,
                "terms": chosen.terms,
                "total": chosen.total,
                "delta_effective": chosen.delta_effective,
                "n": spec.n_train,
                "seed": record.seed,
                "regret": record.regret,
                "kappa_sum": record.kappa_sum,
                "excess_risk_exact": record.excess_risk_exact,
                "grid_optimum": best.report,
                "closed_form_tau": best.closed_form_tau,
                "grid": grid,
            });
            out!("{}", json(&value)?);
        }
        Some(Format::Csv) => {
            let mut cols = header(&["tau"]);
            cols.extend(chosen.terms.named().iter().map(|(k, _)| k.to_string()));
            cols.extend(header(&["total", "delta_effective"]));
            let rows = grid.iter().map(|r| {
                let mut row = vec![r.tau.to_string()];
                row.extend(r.terms.named().iter().map(|(_, v)| num(*v)));
                row.push(num(r.total));
                row.push(num(r.delta_effective));
                row
            });
            out!("{}", csv(&cols, rows));
        }
        None => {
            outln!(
                "{th}: n = {}, regret = {:.6}, kappa_sum = {:.6}, exact excess risk = {:.6e}",
                spec.n_train, record.regret, record.kappa_sum, record.excess_risk_exact
            );
            outln!(
                "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
                "tau", "regret", "stability", "martingale", "mixing", "boundary", "comparator", "total"
            );
            for r in &grid {
                let t = &r.terms;
                outln!(
                    "{:>5} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}",
                    r.tau,
                    t.regret_term,
                    t.stability_term,
                    t.martingale_term,
                    t.mixing_term,
                    t.boundary_term,
                    t.comparator_term,
                    r.total
                );
            }
            outln!(
                "selected tau = {} (total {:.6e}, confidence {:.4})",
                chosen.tau, chosen.total, chosen.delta_effective
            );
            outln!("grid optimum tau = {} (total {:.6e})", best.tau, best.report.total);
            if let Some(t) = best.closed_form_tau {
                outln!("closed-form tau = {t}");
            }
        }
    }
    Ok(())
}

fn verify(cli: &Cli, suite: &str, inject_fault: bool) -> Result<(), CliError> {
    let opts = VerifyOptions {
        seed: cli.seed.unwrap_or(0),
        paths: cli.paths,
        workers: cli.workers,
        inject_fault,
    };
    let report = run_suite(suite, &opts)?;
    let text = json(&report)?;
    if let Some(dir) = &cli.out {
        write(dir, "verify.json", &text)?;
    }
    if cli.format == Some(Format::Json) {
        out!("{text}");
    } else {
        for a in &report.assertions {
            outln!(
                "{} {} ({} checks, min margin {:.3e})",
                if a.passed { "PASS" } else { "FAIL" },
                a.name,
                a.checks,
                a.min_margin
            );
        }
    }
    if report.passed {
        Ok(())
    } else {
        let failed = report.assertions.iter().filter(|a| !a.passed).count();
        Err(CliError::Failed(format!("verification failed: {failed} assertion(s)")))
    }
}

fn experiment(cli: &Cli, name: &str) -> Result<(), CliError> {
    let opts = ExperimentOptions {
        seed: cli.seed.unwrap_or(0),
        paths: cli.paths,
        workers: cli.workers,
    };
    let report = run_experiment(name, &opts)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let path = write(&out, &format!("{}.json", report.name), &json(&report)?)?;
    for c in &report.criteria {
        outln!("{c}");
    }
    outln!("wrote {}", path.display());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} failed", report.name)))
    }
}
