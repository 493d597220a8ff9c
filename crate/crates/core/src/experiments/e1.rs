use std::time::Instant;

use serde_json::json;

use super::{mean, std_error, Criterion, ExperimentOptions, ExperimentReport};
use crate::error::Result;
use crate::evaluate::probe_points;
use crate::learner::{best_fixed_comparator, regret, run_online, BadFtl};
use crate::loss::{Domain, LossKind, LossModel};
use crate::parallel::map_indexed;
use crate::process::sticky_process;

/// Follow-the-leader on the sticky chain with a linear loss: negative
/// regret of order −(1−p)n while every fixed predictor has zero risk.
pub fn run_e1(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let p = 0.2;
    let n = 20_000;
    let paths = opts.paths.unwrap_or(100);
    let model = sticky_process(p)?;
    let st = model.stationary_distribution()?;
    let loss = LossModel::for_process(LossKind::Linear, Domain::centered(1, 2.0)?, &model)?;

    let runs = map_indexed(opts.workers, paths, |r| {
        let path = model.sample_path(n, 0, opts.seed.wrapping_add(r as u64))?;
        let mut learner = BadFtl::new(&loss.domain);
        let ledger = run_online(&mut learner, &loss, path.train(), false)?;
        let w_emp = best_fixed_comparator(&loss, path.train(), &loss.domain)?;
        let reg = regret(&ledger, &loss, path.train(), &w_emp)?;
        Ok((ledger.cumulative_loss() - n as f64 * loss.shift, reg))
    })?;
    let cumulative: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let regrets: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let target = -(1.0 - p) * n as f64;
    let mean_loss = mean(&cumulative);
    let se = std_error(&cumulative);
    let mean_regret = mean(&regrets);
    let regret_cap = target + 5.0 * (n as f64).sqrt();

    let max_risk = probe_points(&loss.domain, 10, opts.seed)
        .iter()
        .map(|w| (loss.expected_risk(&st, &model, w) - loss.shift).abs())
        .fold(0.0, f64::max);

    let criteria = vec![
        Criterion::at_most(
            "E1a",
            format!("|mean cumulative loss − (−(1−p)n)| within 3 SE (mean {mean_loss:.2})"),
            (mean_loss - target).abs(),
            3.0 * se,
        ),
        Criterion::at_most(
            "E1b",
            "mean regret ≤ −(1−p)n + 5√n",
            mean_regret,
            regret_cap,
        ),
        Criterion::at_most("E1c", "max |stationary risk| over probes", max_risk, 1e-12),
    ];
    let details = json!({
        "p": p,
        "n": n,
        "paths": paths,
        "mean_cumulative_loss": mean_loss,
        "std_error": se,
        "mean_regret": mean_regret,
        "cumulative_losses": cumulative,
        "regrets": regrets,
    });
    Ok(ExperimentReport::timed("E1", start, 30.0, criteria, details))
}
