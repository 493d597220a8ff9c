use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::{Criterion, ExperimentOptions, ExperimentReport};
use crate::error::Result;
use crate::evaluate::{Evaluator, EXACT_TOL, TRACE_TOL};
use crate::learner::{build_learner, run_online, Algorithm, LearnerParams};
use crate::loss::{Domain, LossKind, LossModel};
use crate::parallel::map_indexed;
use crate::process::{sticky_process, three_state_demo, MarkovProcessModel};

const MAX_TAU: usize = 20;
const LEMMA_MAX_TAU: usize = 30;
const TEST_LENGTHS: [usize; 3] = [1, 10, 100];
const RUN_LENGTH: usize = 500;

/// Count of checks, failures and the smallest margin seen.
#[derive(Debug, Clone, Copy, Serialize)]
struct Tally {
    checks: usize,
    failures: usize,
    min_margin: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Self {
            checks: 0,
            failures: 0,
            min_margin: f64::INFINITY,
        }
    }
}

impl Tally {
    fn add(&mut self, margin: f64, tol: f64) {
        self.checks += 1;
        if margin < -tol {
            self.failures += 1;
        }
        self.min_margin = self.min_margin.min(margin);
    }

    fn merge(&mut self, other: &Tally) {
        self.checks += other.checks;
        self.failures += other.failures;
        self.min_margin = self.min_margin.min(other.min_margin);
    }

    fn criterion(&self, id: &str, what: &str) -> Criterion {
        Criterion::new(
            id,
            format!("{what}: {} failures in {} checks", self.failures, self.checks),
            self.failures == 0 && self.checks > 0,
            self.failures as f64,
            0.0,
        )
    }
}

fn cases() -> Result<Vec<(MarkovProcessModel, LossKind)>> {
    Ok(vec![
        (sticky_process(0.2)?, LossKind::Linear),
        (sticky_process(0.2)?, LossKind::Logistic),
        (three_state_demo()?, LossKind::Squared),
        (three_state_demo()?, LossKind::Logistic),
    ])
}

const ALGORITHMS: [Algorithm; 3] = [Algorithm::DaConvex, Algorithm::OgdConvex, Algorithm::BadFtl];

/// Exact lemma suite: conditional-mixing lemma, stationary-to-test
/// proposition, Monte-Carlo agreement of future risk, the master
/// inequality and the block-martingale decomposition.
pub fn run_e2(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let seeds = opts.paths.unwrap_or(50);
    let mut lemma = Tally::default();
    let mut prop1 = Tally::default();
    let mut future = Tally::default();
    let mut master = Tally::default();
    let mut blocks = Tally::default();
    let mut per_case = Vec::new();

    for (model, kind) in cases()? {
        let st = model.stationary_distribution()?;
        let loss = LossModel::for_process(kind, Domain::centered(model.dim(), 2.0)?, &model)?;
        let ev = Evaluator::new(&model, &st, &loss)?;
        let probes = ev.probe_points(10, opts.seed);
        let m = model.num_states();

        let mut case_lemma = Tally::default();
        for tau in 1..=LEMMA_MAX_TAU {
            for w in &probes {
                for v in &probes {
                    for s in 0..m {
                        let c = ev.lemma1_check(w, v, s, tau)?;
                        case_lemma.add(c.rhs - c.lhs, EXACT_TOL);
                        case_lemma.add(c.averaged_rhs - c.averaged_abs, EXACT_TOL);
                    }
                }
            }
        }
        let mut case_prop1 = Tally::default();
        for tau in 1..=MAX_TAU {
            for &k in &TEST_LENGTHS {
                for w in &probes {
                    for s in 0..m {
                        let c = ev.proposition1_check(w, s, k, tau)?;
                        case_prop1.add(c.margin(), EXACT_TOL);
                    }
                }
            }
        }
        let mut case_future = Tally::default();
        for (i, w) in probes.iter().take(3).enumerate() {
            for s in 0..m {
                let fr = ev.future_risk(w, s, 10, 2000, opts.seed.wrapping_add(i as u64))?;
                let slack = 4.0 * fr.mc_std_error + 1e-12 - (fr.mc_mean - fr.exact).abs();
                case_future.add(slack, 0.0);
            }
        }

        let runs = map_indexed(opts.workers, seeds, |r| {
            let path = model.sample_path(RUN_LENGTH, MAX_TAU, opts.seed.wrapping_add(r as u64))?;
            let mut mt = Tally::default();
            let mut bt = Tally::default();
            for alg in ALGORITHMS {
                let mut learner = build_learner(alg, &loss, LearnerParams::default())?;
                let ledger = run_online(learner.as_mut(), &loss, path.train(), true)?;
                for tau in 1..=MAX_TAU {
                    let rep = ev.master_inequality_check(&ledger, &path.samples, tau)?;
                    let g = loss.lipschitz_g;
                    let tf = tau as f64;
                    mt.add(rep.rhs - rep.lhs, TRACE_TOL);
                    mt.add(rep.regret - rep.t1, TRACE_TOL);
                    mt.add(g * tf * rep.kappa_sum - rep.t2, TRACE_TOL);
                    mt.add(2.0 * tf * g * loss.diameter() - rep.t3, TRACE_TOL);
                    mt.add(-rep.identity_residual, TRACE_TOL * rep.lhs.abs().max(1.0));

                    let diag = ev.block_decomposition(&ledger, &path.samples, Some(&path.states), tau)?;
                    let sizes: usize = diag.index_sets.iter().map(Vec::len).sum();
                    bt.add(if sizes == RUN_LENGTH { 0.0 } else { -1.0 }, 0.0);
                    bt.add(-diag.identity_residual, EXACT_TOL);
                    bt.add(diag.s_hat_bound - diag.s_hat.iter().sum::<f64>(), TRACE_TOL);
                    bt.add(-diag.max_conditional_excess.unwrap_or(0.0), EXACT_TOL);
                }
            }
            Ok((mt, bt))
        })?;
        let mut case_master = Tally::default();
        let mut case_blocks = Tally::default();
        for (mt, bt) in &runs {
            case_master.merge(mt);
            case_blocks.merge(bt);
        }
        per_case.push(json!({
            "process": model.name,
            "loss": kind.name(),
            "lemma1": case_lemma,
            "proposition1": case_prop1,
            "future_risk_mc": case_future,
            "master_inequality": case_master,
            "block_decomposition": case_blocks,
        }));
        lemma.merge(&case_lemma);
        prop1.merge(&case_prop1);
        future.merge(&case_future);
        master.merge(&case_master);
        blocks.merge(&case_blocks);
    }

    let criteria = vec![
        lemma.criterion("E2-lemma1", "conditional mixing inequality (φ and β forms)"),
        prop1.criterion("E2-prop1", "stationary-to-test inequality"),
        future.criterion("E2-future", "Monte-Carlo future risk within 4 SE of exact"),
        master.criterion("E2-master", "master inequality and its three-term decomposition"),
        blocks.criterion("E2-blocks", "block decomposition identity, partition and bounds"),
    ];
    let details = json!({ "seeds": seeds, "run_length": RUN_LENGTH, "cases": per_case });
    Ok(ExperimentReport::timed("E2", start, 120.0, criteria, details))
}
