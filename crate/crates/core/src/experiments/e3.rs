use std::time::Instant;

use serde_json::json;

use super::{median, slope, sticky_profile, Criterion, ExperimentOptions, ExperimentReport};
use crate::bounds::TheoremId;
use crate::error::Result;
use crate::evaluate::{coverage_run, summarize, CoverageSpec, Evaluator};
use crate::learner::{Algorithm, LearnerParams};
use crate::loss::{BaseLoss, Domain, LossKind, LossModel};
use crate::parallel::map_indexed;
use crate::process::sticky_process;

const LENGTHS: [usize; 3] = [100, 1_000, 10_000];
const RIDGE: f64 = 0.1;
const LAMBDA: f64 = 1.0;
const DELTA: f64 = 0.02;

/// Strongly convex dual averaging on ridge-regularized least squares over
/// the sticky chain: per-step stability, the excess-risk rate and coverage
/// of the strongly convex high-probability bound.
pub fn run_e3(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let p = 0.2;
    let paths = opts.paths.unwrap_or(100);
    let model = sticky_process(p)?;
    let st = model.stationary_distribution()?;
    let kind = LossKind::Ridge {
        base: BaseLoss::Squared,
        lambda_f: RIDGE,
    };
    let loss = LossModel::for_process(kind, Domain::centered(1, 2.0)?, &model)?.with_expected_modulus(&st);
    let ev = Evaluator::new(&model, &st, &loss)?;
    let g = loss.lipschitz_g;

    let mut worst_kappa_gap = f64::NEG_INFINITY;
    let mut medians = Vec::new();
    let mut coverage = Vec::new();
    let mut criteria = Vec::new();
    let mut coverage_ok = true;
    let mut worst_violation = 0.0_f64;
    let mut worst_tolerance = 1.0_f64;
    for &n in &LENGTHS {
        let spec = CoverageSpec {
            model: model.clone(),
            loss: loss.clone(),
            algorithm: Algorithm::DaStrong,
            params: LearnerParams {
                lambda: Some(LAMBDA),
                ..Default::default()
            },
            n_train: n,
            theorem: TheoremId::HighprobStrongPhi,
            delta: DELTA,
            tau: None,
            mixing: sticky_profile(p)?,
            k_test: 1,
            epsilon: 1.0,
            n_paths: paths,
            seed: opts.seed.wrapping_add(1_000_000 * n as u64),
            workers: opts.workers,
        };
        let runs = map_indexed(opts.workers, paths, |r| {
            let (record, ledger) = coverage_run(&spec, &ev, r)?;
            let gap = ledger
                .stability_seq
                .iter()
                .enumerate()
                .map(|(i, k)| k - g / (LAMBDA * (i + 1) as f64))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((record, gap))
        })?;
        for (_, gap) in &runs {
            worst_kappa_gap = worst_kappa_gap.max(*gap);
        }
        let records: Vec<_> = runs.into_iter().map(|r| r.0).collect();
        let excess: Vec<f64> = records.iter().map(|r| r.excess_risk_exact).collect();
        medians.push(median(&excess));
        let report = summarize(spec.theorem, records);
        coverage_ok &= report.within_tolerance;
        worst_violation = worst_violation.max(report.violation_fraction - report.tolerance);
        worst_tolerance = worst_tolerance.min(report.tolerance);
        coverage.push(json!({
            "n": n,
            "median_excess": medians.last(),
            "violation_fraction": report.violation_fraction,
            "failure_allowance": report.failure_allowance,
            "tolerance": report.tolerance,
            "bound_mean": report.bound_mean,
            "mean_excess": report.mean_excess,
            "tau": report.runs.first().map(|r| r.tau),
        }));
    }

    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let log_n: Vec<f64> = LENGTHS.iter().map(|&n| (n as f64).ln()).collect();
    let log_excess: Vec<f64> = medians.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
    let rate = slope(&log_n, &log_excess);

    criteria.push(Criterion::at_most(
        "E3a",
        "max over steps of κ(t) − G/(λt)",
        worst_kappa_gap,
        1e-9,
    ));
    criteria.push(Criterion::new(
        "E3b-monotone",
        "median exact excess risk decreases with n",
        decreasing,
        medians.last().copied().unwrap_or(f64::NAN),
        medians.first().copied().unwrap_or(f64::NAN),
    ));
    criteria.push(Criterion::at_most("E3b-slope", "slope of log median excess vs log n", rate, -0.75));
    criteria.push(Criterion::new(
        "E3c",
        "violation fraction minus allowance (worst n)",
        coverage_ok,
        worst_violation,
        0.0,
    ));
    let details = json!({
        "lengths": LENGTHS,
        "paths": paths,
        "ridge": RIDGE,
        "lambda": LAMBDA,
        "lipschitz_g": g,
        "median_excess": medians,
        "slope": rate,
        "coverage": coverage,
        "min_tolerance": worst_tolerance,
    });
    Ok(ExperimentReport::timed("E3", start, 300.0, criteria, details))
}
