//! Exact-check suites run by `stabgen verify`: the conditional mixing
//! lemma, the master inequality, the block decomposition, per-step learner
//! stability and the dual-norm sum of FTAL-VAW.
//!
//! With `inject_fault` every chain has its first transition row replaced by
//! a point mass on the last state while the stationary law and mixing
//! coefficients of the unperturbed chain are still used as the claimed
//! ones. The lemma checks must then fail.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::{Evaluator, EXACT_TOL, TRACE_TOL};
use crate::learner::{
    run_online, Algorithm, DaLearner, DualAveragingState, FtalLearner, LearnerParams, OgdLearner,
    OgdState, OnlineLearner,
};
use crate::loss::{BaseLoss, Domain, LossKind, LossModel};
use crate::parallel::map_indexed;
use crate::process::{parse_builtin, MarkovProcessModel, MixingProfile, StationaryModel};

pub const SUITES: [&str; 7] = ["lemma1", "master", "blocks", "stability", "hazan", "iid", "all"];

const RUN_LENGTH: usize = 500;
const LEMMA_MAX_TAU: usize = 30;
const MAX_TAU: usize = 20;
const TEST_LENGTHS: [usize; 3] = [1, 10, 100];
const STABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Number of seeded runs for the trace-based suites.
    pub paths: Option<usize>,
    pub workers: Option<usize>,
    pub inject_fault: bool,
}

/// One named inequality, checked many times; `min_margin` is the smallest
/// `rhs − lhs` seen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    pub min_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub fault_injected: bool,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Default)]
struct Recorder {
    items: BTreeMap<String, Assertion>,
}

impl Recorder {
    fn add(&mut self, name: impl Into<String>, margin: f64, tol: f64) {
        let a = self.items.entry(name.into()).or_insert_with_key(|k| Assertion {
            name: k.clone(),
            checks: 0,
            failures: 0,
            min_margin: f64::INFINITY,
            tolerance: tol,
            passed: true,
        });
        a.checks += 1;
        if !(margin >= -tol) {
            a.failures += 1;
            a.passed = false;
        }
        if margin.is_nan() {
            a.min_margin = f64::NAN;
        } else if !a.min_margin.is_nan() {
            a.min_margin = a.min_margin.min(margin);
        }
    }

    fn error(&mut self, name: impl Into<String>, err: &Error) {
        let name = format!("{}: {err}", name.into());
        self.add(name, f64::NEG_INFINITY, 0.0);
    }

    fn merge(&mut self, other: Recorder) {
        for (k, b) in other.items {
            match self.items.get_mut(&k) {
                Some(a) => {
                    a.checks += b.checks;
                    a.failures += b.failures;
                    a.passed &= b.passed;
                    a.min_margin = if a.min_margin.is_nan() || b.min_margin.is_nan() {
                        f64::NAN
                    } else {
                        a.min_margin.min(b.min_margin)
                    };
                }
                None => {
                    self.items.insert(k, b);
                }
            }
        }
    }
}

/// A chain and loss with the coefficients they are claimed to satisfy.
struct Case {
    label: String,
    model: MarkovProcessModel,
    stationary: StationaryModel,
    loss: LossModel,
    claimed: MixingProfile,
}

const CASES: [(&str, LossKind); 6] = [
    ("sticky(0.2)", LossKind::Linear),
    ("sticky(0.2)", LossKind::Logistic),
    ("3state-demo", LossKind::Squared),
    ("3state-demo", LossKind::Logistic),
    ("iid-uniform", LossKind::Squared),
    ("sticky-features(0.2,2,8,0)", LossKind::Logistic),
];

/// The chain with its first row moved onto the last state.
fn perturb(model: &MarkovProcessModel) -> Result<MarkovProcessModel> {
    let m = model.num_states();
    let mut p: DMatrix<f64> = model.transition().clone();
    p.row_mut(0).fill(0.0);
    p[(0, m - 1)] = 1.0;
    MarkovProcessModel::new(
        format!("{} (perturbed)", model.name),
        p,
        model.emissions().to_vec(),
        model.initial().clone(),
    )
}

fn build_case(process: &str, kind: LossKind, fault: bool) -> Result<Case> {
    let truth = parse_builtin(process)?;
    let stationary = truth.stationary_distribution()?;
    let claimed = MixingProfile::exact(&truth, &stationary, LEMMA_MAX_TAU)?;
    let model = if fault { perturb(&truth)? } else { truth };
    let loss = LossModel::for_process(kind, Domain::centered(model.dim(), 2.0)?, &model)?
        .with_expected_modulus(&stationary);
    Ok(Case {
        label: format!("{process}/{}", kind.name()),
        model,
        stationary,
        loss,
        claimed,
    })
}

fn claimed_phi(case: &Case, tau: usize) -> f64 {
    case.claimed.phi(tau).unwrap_or(f64::INFINITY)
}

fn lemma_suite(case: &Case, ev: &Evaluator, seed: u64, max_tau: usize, rec: &mut Recorder) -> Result<()> {
    let gr = case.loss.lipschitz_g * case.loss.diameter();
    let probes = ev.probe_points(10, seed);
    let label = &case.label;
    for tau in 1..=max_tau {
        let phi = claimed_phi(case, tau);
        let beta = case.claimed.beta(tau);
        for w in &probes {
            for v in &probes {
                for s in 0..case.model.num_states() {
                    let c = ev.lemma1_check(w, v, s, tau)?;
                    rec.add(format!("{label}: conditional mixing, worst state"), gr * phi - c.lhs, EXACT_TOL);
                    rec.add(
                        format!("{label}: conditional mixing, averaged"),
                        gr * beta - c.averaged_abs,
                        EXACT_TOL,
                    );
                }
            }
        }
    }
    for tau in 1..=max_tau.min(MAX_TAU) {
        let phi = claimed_phi(case, tau);
        for &k in &TEST_LENGTHS {
            for w in &probes {
                let excess = ev.excess_risk(w);
                for s in 0..case.model.num_states() {
                    let lhs = ev.future_risk_exact(w, s, k)?;
                    let rhs = excess + phi * gr + (tau - 1) as f64 * gr / k as f64;
                    rec.add(format!("{label}: stationary-to-test"), rhs - lhs, EXACT_TOL);
                }
            }
        }
    }
    Ok(())
}

fn learner_for(alg: Algorithm, loss: &LossModel) -> Result<Box<dyn OnlineLearner + Send>> {
    crate::learner::build_learner(alg, loss, LearnerParams::default())
}

const TRACE_ALGORITHMS: [Algorithm; 3] = [Algorithm::DaConvex, Algorithm::OgdConvex, Algorithm::BadFtl];

fn trace_suite(
    case: &Case,
    ev: &Evaluator,
    seed: u64,
    taus: &[usize],
    master: bool,
    blocks: bool,
) -> Result<Recorder> {
    let mut rec = Recorder::default();
    let max_tau = taus.iter().copied().max().unwrap_or(1);
    let path = case.model.sample_path(RUN_LENGTH, max_tau, seed)?;
    let g = case.loss.lipschitz_g;
    let r = case.loss.diameter();
    for alg in TRACE_ALGORITHMS {
        let mut learner = learner_for(alg, &case.loss)?;
        let ledger = run_online(learner.as_mut(), &case.loss, path.train(), true)?;
        let prefix = format!("{}: {alg}", case.label);
        for &tau in taus {
            if master {
                let rep = ev.master_inequality_check(&ledger, &path.samples, tau)?;
                let tf = tau as f64;
                rec.add(format!("{prefix}: master inequality"), rep.rhs - rep.lhs, TRACE_TOL);
                rec.add(format!("{prefix}: regret term"), rep.regret - rep.t1, TRACE_TOL);
                rec.add(format!("{prefix}: stability term"), g * tf * rep.kappa_sum - rep.t2, TRACE_TOL);
                rec.add(format!("{prefix}: boundary term"), 2.0 * tf * g * r - rep.t3, TRACE_TOL);
                rec.add(
                    format!("{prefix}: decomposition identity"),
                    -rep.identity_residual,
                    TRACE_TOL * rep.lhs.abs().max(1.0),
                );
            }
            if blocks {
                let diag = ev.block_decomposition(&ledger, &path.samples, Some(&path.states), tau)?;
                let sizes: usize = diag.index_sets.iter().map(Vec::len).sum();
                rec.add(
                    format!("{prefix}: index sets partition the run"),
                    -(sizes.abs_diff(RUN_LENGTH) as f64),
                    0.0,
                );
                rec.add(format!("{prefix}: block identity"), -diag.identity_residual, EXACT_TOL);
                rec.add(
                    format!("{prefix}: block sums"),
                    diag.s_hat_bound - diag.s_hat.iter().sum::<f64>(),
                    TRACE_TOL,
                );
                rec.add(
                    format!("{prefix}: conditional block means"),
                    -diag.max_conditional_excess.unwrap_or(0.0),
                    EXACT_TOL,
                );
            }
        }
    }
    Ok(rec)
}

/// Observed `‖w(t) − w(t+1)‖` against the learner's per-step envelope.
fn stability_suite(case: &Case, seed: u64) -> Result<Recorder> {
    let mut rec = Recorder::default();
    let loss = &case.loss;
    let dom = &loss.domain;
    let g = loss.lipschitz_g;
    let path = case.model.sample_path(RUN_LENGTH, 0, seed)?;
    let mut runs: Vec<(String, Box<dyn OnlineLearner + Send>, Box<dyn Fn(usize) -> f64>)> = Vec::new();
    let da = DualAveragingState::convex(dom, g);
    let diameter = dom.diameter;
    let env = da.clone();
    runs.push((
        "da-convex".into(),
        Box::new(DaLearner(da, dom.clone())),
        Box::new(move |t| env.stability_envelope(t, diameter)),
    ));
    let ogd = OgdState::convex(dom, g);
    let env = ogd.clone();
    runs.push((
        "ogd-convex".into(),
        Box::new(OgdLearner(ogd, dom.clone())),
        Box::new(move |t| env.stepsize(t) * g),
    ));
    if loss.strong_lambda > 0.0 {
        let da = DualAveragingState::strongly_convex(dom, g, loss.strong_lambda)?;
        let env = da.clone();
        runs.push((
            "da-strong".into(),
            Box::new(DaLearner(da, dom.clone())),
            Box::new(move |t| env.stability_envelope(t, diameter)),
        ));
        let ogd = OgdState::strongly_convex(dom, g, loss.strong_lambda)?;
        let env = ogd.clone();
        runs.push((
            "ogd-strong".into(),
            Box::new(OgdLearner(ogd, dom.clone())),
            Box::new(move |t| env.stepsize(t) * g),
        ));
    }
    for (name, mut learner, envelope) in runs {
        let ledger = run_online(learner.as_mut(), loss, path.train(), false)?;
        for (i, k) in ledger.stability_seq.iter().enumerate() {
            rec.add(
                format!("{}: {name}: per-step stability", case.label),
                envelope(i + 1) - k,
                STABILITY_TOL,
            );
        }
    }
    Ok(rec)
}

/// Running sums of `‖x_t‖²` in the dual norm against `d·log(X²t/ε + 1)`.
fn hazan_suite(case: &Case, seed: u64) -> Result<Recorder> {
    let mut rec = Recorder::default();
    if case.loss.kind.base() == BaseLoss::Linear {
        return Ok(rec);
    }
    let params = LearnerParams::default();
    let eps = params.epsilon.unwrap_or(1.0);
    let mut learner = FtalLearner::new(&case.loss, params)?;
    let path = case.model.sample_path(RUN_LENGTH, 0, seed)?;
    run_online(&mut learner, &case.loss, path.train(), false)?;
    let d = case.loss.domain.dim() as f64;
    let x2 = case.loss.feature_bound_x.powi(2);
    let mut sum = 0.0;
    for (i, h) in learner.dual_norms_sq.iter().enumerate() {
        sum += h;
        let bound = d * (x2 * (i + 1) as f64 / eps + 1.0).ln();
        rec.add(format!("{}: ftal-vaw: dual-norm sum", case.label), bound - sum, EXACT_TOL);
    }
    rec.add(
        format!("{}: ftal-vaw: constrained-step optimality", case.label),
        1e-10 - learner.max_kkt_residual,
        0.0,
    );
    Ok(rec)
}

/// Independent draws from π at lag one: the mixing terms vanish and every
/// identity holds with a single block.
fn iid_suite(opts: &VerifyOptions, seeds: usize, rec: &mut Recorder) -> Result<()> {
    let case = build_case("iid-uniform", LossKind::Squared, opts.inject_fault)?;
    let ev = Evaluator::new(&case.model, &case.stationary, &case.loss)?;
    let phi = case.model.phi_coefficient(&case.stationary, 1)?;
    let beta = case.model.beta_coefficient(&case.stationary, 1)?;
    rec.add("iid-uniform: φ(1) vanishes", -phi, EXACT_TOL);
    rec.add("iid-uniform: β(1) vanishes", -beta, EXACT_TOL);
    let probes = ev.probe_points(10, opts.seed);
    for w in &probes {
        for v in &probes {
            for s in 0..case.model.num_states() {
                let c = ev.lemma1_check(w, v, s, 1)?;
                rec.add("iid-uniform: conditional gap at lag one", -c.lhs.abs(), EXACT_TOL);
            }
        }
    }
    let runs = map_indexed(opts.workers, seeds, |r| {
        let mut out = trace_suite(&case, &ev, opts.seed.wrapping_add(r as u64), &[1], true, true)?;
        let path = case.model.sample_path(RUN_LENGTH, 1, opts.seed.wrapping_add(r as u64))?;
        let mut learner = learner_for(Algorithm::DaConvex, &case.loss)?;
        let ledger = run_online(learner.as_mut(), &case.loss, path.train(), true)?;
        let diag = ev.block_decomposition(&ledger, &path.samples, Some(&path.states), 1)?;
        out.add(
            "iid-uniform: lag one gives one block",
            -(diag.index_sets.len().abs_diff(1) as f64),
            0.0,
        );
        Ok(out)
    })?;
    runs.into_iter().for_each(|r| rec.merge(r));
    Ok(())
}

fn run_cases(opts: &VerifyOptions, seeds: usize, suite: &str, rec: &mut Recorder) {
    let taus: Vec<usize> = (1..=MAX_TAU).collect();
    for (process, kind) in CASES {
        let label = format!("{process}/{}", kind.name());
        let outcome = (|| -> Result<()> {
            let case = build_case(process, kind, opts.inject_fault)?;
            let ev = Evaluator::new(&case.model, &case.stationary, &case.loss)?;
            let runs = |f: &(dyn Fn(u64) -> Result<Recorder> + Sync)| -> Result<Vec<Recorder>> {
                map_indexed(opts.workers, seeds, |r| f(opts.seed.wrapping_add(r as u64)))
            };
            let collected = match suite {
                "lemma1" => {
                    lemma_suite(&case, &ev, opts.seed, LEMMA_MAX_TAU, rec)?;
                    Vec::new()
                }
                "master" => runs(&|s| trace_suite(&case, &ev, s, &taus, true, false))?,
                "blocks" => runs(&|s| trace_suite(&case, &ev, s, &taus, false, true))?,
                "stability" => runs(&|s| stability_suite(&case, s))?,
                "hazan" => runs(&|s| hazan_suite(&case, s))?,
                _ => unreachable!(),
            };
            collected.into_iter().for_each(|r| rec.merge(r));
            Ok(())
        })();
        if let Err(e) = outcome {
            rec.error(format!("{label}: {suite}"), &e);
        }
    }
}

/// Runs the named suite, or every suite for `"all"`.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<VerifyReport> {
    let name = name.to_ascii_lowercase();
    if !SUITES.contains(&name.as_str()) {
        return Err(Error::Config(format!(
            "unknown verification suite '{name}' (expected one of {})",
            SUITES.join(", ")
        )));
    }
    let seeds = opts.paths.unwrap_or(10).max(1);
    let mut rec = Recorder::default();
    let selected: Vec<&str> = if name == "all" {
        SUITES[..SUITES.len() - 1].to_vec()
    } else {
        vec![name.as_str()]
    };
    for suite in selected {
        if suite == "iid" {
            if let Err(e) = iid_suite(opts, seeds, &mut rec) {
                rec.error("iid", &e);
            }
        } else {
            run_cases(opts, seeds, suite, &mut rec);
        }
    }
    let assertions: Vec<Assertion> = rec.items.into_values().collect();
    Ok(VerifyReport {
        suite: name,
        fault_injected: opts.inject_fault,
        passed: !assertions.is_empty() && assertions.iter().all(|a| a.passed),
        assertions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(fault: bool) -> VerifyOptions {
        VerifyOptions {
            paths: Some(2),
            inject_fault: fault,
            ..Default::default()
        }
    }

    #[test]
    fn lemma_suite_passes_on_shipped_chains() {
        let rep = run_suite("lemma1", &quick(false)).unwrap();
        assert!(rep.passed, "{:#?}", rep.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>());
    }

    #[test]
    fn perturbed_row_is_reported() {
        let rep = run_suite("lemma1", &quick(true)).unwrap();
        assert!(!rep.passed);
        assert!(rep.assertions.iter().any(|a| a.name.contains("conditional mixing") && !a.passed));
    }

    #[test]
    fn iid_lag_one_suite_passes() {
        let rep = run_suite("iid", &quick(false)).unwrap();
        assert!(rep.passed, "{:#?}", rep.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>());
    }

    #[test]
    fn trace_suites_pass() {
        for s in ["master", "blocks", "stability", "hazan"] {
            let rep = run_suite(s, &quick(false)).unwrap();
            assert!(rep.passed, "{s}: {:#?}", rep.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>());
        }
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope", &VerifyOptions::default()), Err(Error::Config(_))));
    }
}
