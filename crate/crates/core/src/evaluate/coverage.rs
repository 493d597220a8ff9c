use nalgebra::DVector;
use serde::Serialize;

use super::Evaluator;
use crate::bounds::{auto_tau, BoundInputs, TheoremId};
use crate::error::{Error, Result};
use crate::learner::{
    best_fixed_comparator, build_learner, regret, run_online, Algorithm, LearnerParams, RunLedger,
};
use crate::loss::LossModel;
use crate::parallel::map_indexed;
use crate::process::{MarkovProcessModel, MixingProfile, StationaryModel};

/// A Monte-Carlo check of one theorem's bound over independent runs.
#[derive(Debug, Clone)]
pub struct CoverageSpec {
    pub model: MarkovProcessModel,
    pub loss: LossModel,
    pub algorithm: Algorithm,
    pub params: LearnerParams,
    pub n_train: usize,
    pub theorem: TheoremId,
    pub delta: f64,
    /// `None` resolves the lag per run with [`auto_tau`].
    pub tau: Option<usize>,
    pub mixing: MixingProfile,
    pub k_test: usize,
    pub epsilon: f64,
    pub n_paths: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub algorithm: String,
    pub regret: f64,
    pub kappa_sum: f64,
    pub excess_risk_exact: f64,
    pub bound_total: f64,
    pub violated: bool,
    pub tau: usize,
    pub delta_effective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub theorem_id: String,
    pub runs: Vec<RunRecord>,
    pub violation_fraction: f64,
    pub mean_excess: f64,
    pub bound_mean: f64,
    /// Failure probability the theorem allows, `1 − δ_effective`.
    pub failure_allowance: f64,
    /// Allowance plus three binomial standard errors.
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Inputs to `theorem` for a run with the given realized regret and
/// stability sum.
pub fn bound_inputs(
    spec: &CoverageSpec,
    stationary: &StationaryModel,
    w_star: &DVector<f64>,
    regret_value: f64,
    kappa_sum: f64,
) -> BoundInputs {
    let loss = &spec.loss;
    let mut inp = BoundInputs::new(spec.n_train, loss.lipschitz_g, loss.diameter(), spec.mixing.clone());
    inp.k_test = spec.k_test;
    inp.delta = spec.delta;
    inp.lambda = loss.strong_lambda;
    inp.l = loss.scalar_lipschitz_l;
    inp.sigma = spec.params.sigma.unwrap_or(loss.scalar_strong_sigma);
    inp.x = loss.feature_bound_x;
    inp.d = loss.domain.dim();
    inp.lambda_min_cov = stationary.lambda_min;
    inp.kappa_sum = kappa_sum;
    inp.regret_value = regret_value;
    inp.epsilon = spec.epsilon;
    inp.w_star_norm_sq = w_star.norm_squared();
    inp
}

/// Run `r` of a coverage study, with its ledger (iterates not stored).
pub fn coverage_run(spec: &CoverageSpec, ev: &Evaluator<'_>, r: usize) -> Result<(RunRecord, RunLedger)> {
    let seed = spec.seed.wrapping_add(r as u64);
    let path = spec.model.sample_path(spec.n_train, 0, seed)?;
    let train = path.train();
    let mut learner = build_learner(spec.algorithm, &spec.loss, spec.params)?;
    let ledger = run_online(learner.as_mut(), &spec.loss, train, false)?;
    let w_emp = best_fixed_comparator(&spec.loss, train, &spec.loss.domain)?;
    let regret_value = regret(&ledger, &spec.loss, train, &w_emp)?;
    let kappa_sum = ledger.kappa_sum();
    let inp = bound_inputs(spec, ev.stationary, &ev.w_star, regret_value, kappa_sum);
    let tau = match spec.tau {
        Some(t) => t,
        None => auto_tau(spec.theorem, &inp)?,
    };
    let report = spec.theorem.evaluate(&inp, tau)?;
    let excess = ev.excess_risk(ledger.averaged_predictor());
    let record = RunRecord {
        seed,
        n: spec.n_train,
        algorithm: spec.algorithm.as_str().to_string(),
        regret: regret_value,
        kappa_sum,
        excess_risk_exact: excess,
        bound_total: report.total,
        violated: excess > report.total,
        tau,
        delta_effective: report.delta_effective,
    };
    Ok((record, ledger))
}

/// Runs `n_paths` independent runs and reports how often the exact excess
/// risk of the averaged predictor exceeds the theorem's bound. Results are
/// ordered by run index whatever the worker count.
pub fn monte_carlo_coverage(spec: &CoverageSpec) -> Result<CoverageReport> {
    if spec.n_paths < 1 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    let stationary = spec.model.stationary_distribution()?;
    let ev = Evaluator::new(&spec.model, &stationary, &spec.loss)?;
    let runs = map_indexed(spec.workers, spec.n_paths, |r| coverage_run(spec, &ev, r).map(|o| o.0))?;
    Ok(summarize(spec.theorem, runs))
}

/// Aggregates per-run records into a coverage report.
pub fn summarize(theorem: TheoremId, runs: Vec<RunRecord>) -> CoverageReport {
    let m = runs.len() as f64;
    let violation_fraction = runs.iter().filter(|r| r.violated).count() as f64 / m;
    let mean_excess = runs.iter().map(|r| r.excess_risk_exact).sum::<f64>() / m;
    let bound_mean = runs.iter().map(|r| r.bound_total).sum::<f64>() / m;
    let failure_allowance = runs
        .iter()
        .map(|r| (1.0 - r.delta_effective).clamp(0.0, 1.0))
        .fold(0.0, f64::max);
    let q = failure_allowance;
    let tolerance = q + 3.0 * (q * (1.0 - q) / m).sqrt();
    CoverageReport {
        theorem_id: theorem.as_str().to_string(),
        runs,
        violation_fraction,
        mean_excess,
        bound_mean,
        failure_allowance,
        tolerance,
        within_tolerance: violation_fraction <= tolerance,
    }
}
