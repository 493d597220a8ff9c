use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::{Criterion, ExperimentOptions, ExperimentReport};
use crate::bounds::{ftal_regret_bound, BoundInputs};
use crate::error::{Error, Result};
use crate::learner::{best_fixed_comparator, FtalVawState};
use crate::linalg::solve_ball_qp;
use crate::loss::{Domain, LossKind, LossModel};
use crate::parallel::map_indexed;
use crate::process::{sticky_features, MixingProfile};

const DIMS: [usize; 2] = [2, 5];
const N: usize = 5_000;
const STATES: usize = 8;
const MAX_TAU: usize = 10;
const EPSILON: f64 = 1.0;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default)]
struct RunOutcome {
    regret_gap: f64,
    hazan_gap: f64,
    stability_violations: usize,
    worst_stability_gap: f64,
    near_violations: usize,
    worst_near_gap: f64,
    dual_form_error: f64,
    /// Coefficient on the newest dual norm that the per-step stability
    /// inequality would need at lag 1 to hold, over the run.
    worst_lag1_ratio: f64,
}

fn one_run(d: usize, seed: u64) -> Result<RunOutcome> {
    let model = sticky_features(0.2, d, STATES, seed)?;
    let loss = LossModel::for_process(LossKind::Logistic, Domain::centered(d, 2.0)?, &model)?;
    let dom = &loss.domain;
    let path = model.sample_path(N, 0, seed)?;
    let samples = path.train();
    let sigma = loss.scalar_strong_sigma;
    let l = loss.scalar_lipschitz_l;
    let base = loss.kind.base();

    let mut state = FtalVawState::new(d, EPSILON, sigma)?;
    let mut a = DMatrix::<f64>::identity(d, d) * EPSILON;
    let mut grad_sum = DVector::<f64>::zeros(d);
    let mut curvature_sum = DVector::<f64>::zeros(d);
    let mut iterates = Vec::with_capacity(N);
    let mut grams = Vec::with_capacity(N);
    let mut h = Vec::with_capacity(N);
    let mut dual_form_error = 0.0_f64;
    for z in samples {
        let x = &z.x;
        let y = z.y.unwrap_or(0.0);
        a += x * x.transpose();
        let pred = state.predict(dom, x)?;
        // the update written with past gradients and squared past margins
        let linear = &grad_sum - &curvature_sum * sigma;
        let direct = solve_ball_qp(&(&a * sigma), &linear, &dom.center, dom.radius())?;
        dual_form_error = dual_form_error.max((&direct.w - &pred.w).norm());

        let chol = a.clone().cholesky().ok_or(Error::SingularSystem)?;
        h.push(x.dot(&chol.solve(x)));
        let s = x.dot(&pred.w);
        grad_sum += x * base.scalar_derivative(s, y);
        curvature_sum += x * s;
        state.update(&loss, x, y, &pred.w)?;
        iterates.push(pred.w);
        grams.push(a.clone());
    }

    let value = |w: &DVector<f64>, t: usize| loss.raw_value(w, &samples[t]);
    let w_emp = best_fixed_comparator(&loss, samples, dom)?;
    let regret: f64 = (0..N).map(|t| value(&iterates[t], t) - value(&w_emp, t)).sum();
    let mut inp = BoundInputs::new(N, loss.lipschitz_g, loss.diameter(), MixingProfile::iid());
    inp.l = l;
    inp.sigma = sigma;
    inp.x = loss.feature_bound_x;
    inp.d = d;
    inp.epsilon = EPSILON;
    inp.w_star_norm_sq = w_emp.norm_squared();
    let regret_gap = regret - ftal_regret_bound(&inp)?;

    let hazan = d as f64 * (loss.feature_bound_x.powi(2) * N as f64 / EPSILON + 1.0).ln();
    let hazan_gap = h.iter().sum::<f64>() - hazan;

    let root: Vec<f64> = h.iter().map(|v| v.sqrt()).collect();
    let mut out = RunOutcome {
        regret_gap,
        hazan_gap,
        dual_form_error,
        worst_stability_gap: f64::NEG_INFINITY,
        worst_near_gap: f64::NEG_INFINITY,
        worst_lag1_ratio: f64::NEG_INFINITY,
        ..Default::default()
    };
    let scale = l * l / (2.0 * sigma);
    for tau in 1..=MAX_TAU {
        for t in 0..N - tau {
            let later = t + tau;
            let gap = value(&iterates[t], later) - value(&iterates[later], later);
            let middle: f64 = h[t + 1..later].iter().sum();
            let rhs = scale * (6.0 * tau as f64 * h[later] + 5.0 * middle + 3.0 * h[t]);
            if gap > rhs + TOL {
                out.stability_violations += 1;
            }
            out.worst_stability_gap = out.worst_stability_gap.max(gap - rhs);
            if tau == 1 && h[later] > 0.0 {
                let needed = (gap / scale - 3.0 * h[t]) / h[later];
                out.worst_lag1_ratio = out.worst_lag1_ratio.max(needed);
            }

            let diff = &iterates[t] - &iterates[later];
            let moved = diff.dot(&(&grams[later] * &diff)).max(0.0).sqrt();
            let near = 3.0 * l / sigma * root[t..later].iter().sum::<f64>()
                + 2.0 * l / sigma * root[t + 1..=later].iter().sum::<f64>();
            if moved > near + TOL {
                out.near_violations += 1;
            }
            out.worst_near_gap = out.worst_near_gap.max(moved - near);
        }
    }
    Ok(out)
}

/// FTAL with the Vovk–Azoury–Warmuth correction on logistic streams: the
/// regret bound, per-step stability, the sum of dual norms and agreement of
/// the two forms of the update.
pub fn run_e4(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let seeds = opts.paths.unwrap_or(50);
    let jobs: Vec<(usize, u64)> = DIMS
        .iter()
        .flat_map(|&d| (0..seeds).map(move |r| (d, opts.seed.wrapping_add(r as u64))))
        .collect();
    let outcomes = map_indexed(opts.workers, jobs.len(), |i| one_run(jobs[i].0, jobs[i].1))?;

    let max = |f: fn(&RunOutcome) -> f64| outcomes.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let regret_violations = outcomes.iter().filter(|o| o.regret_gap > 0.0).count();
    let hazan_violations = outcomes.iter().filter(|o| o.hazan_gap > 0.0).count();
    let stability: usize = outcomes.iter().map(|o| o.stability_violations).sum();
    let near: usize = outcomes.iter().map(|o| o.near_violations).sum();
    let dual = max(|o| o.dual_form_error);

    let criteria = vec![
        Criterion::at_most(
            "E4a",
            format!("runs exceeding the regret bound (worst gap {:.4e})", max(|o| o.regret_gap)),
            regret_violations as f64,
            0.0,
        ),
        Criterion::at_most(
            "E4b-stability",
            format!(
                "per-step loss-stability violations (worst gap {:.4e})",
                max(|o| o.worst_stability_gap)
            ),
            stability as f64,
            0.0,
        ),
        Criterion::at_most(
            "E4b-near",
            format!(
                "per-step iterate-stability violations (worst gap {:.4e})",
                max(|o| o.worst_near_gap)
            ),
            near as f64,
            0.0,
        ),
        Criterion::at_most(
            "E4c",
            format!("runs exceeding the dual-norm sum bound (worst gap {:.4e})", max(|o| o.hazan_gap)),
            hazan_violations as f64,
            0.0,
        ),
        Criterion::at_most("E4d", "max distance between the two update forms", dual, TOL),
    ];
    let details = json!({
        "dims": DIMS,
        "n": N,
        "seeds": seeds,
        "states": STATES,
        "max_tau": MAX_TAU,
        "worst_regret_gap": max(|o| o.regret_gap),
        "worst_hazan_gap": max(|o| o.hazan_gap),
        "worst_stability_gap": max(|o| o.worst_stability_gap),
        "worst_near_gap": max(|o| o.worst_near_gap),
        "worst_lag1_newest_coefficient": max(|o| o.worst_lag1_ratio),
        "dual_form_error": dual,
    });
    Ok(ExperimentReport::timed("E4", start, 300.0, criteria, details))
}
