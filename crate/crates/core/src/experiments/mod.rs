//! The named end-to-end experiments E1–E5. Each returns a report with one
//! pass/fail line per criterion plus plot-ready detail.

mod e1;
mod e2;
mod e3;
mod e4;
mod e5;

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::MixingProfile;

pub use e1::run_e1;
pub use e2::run_e2;
pub use e3::run_e3;
pub use e4::run_e4;
pub use e5::run_e5;

pub const EXPERIMENTS: [&str; 5] = ["E1", "E2", "E3", "E4", "E5"];

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    pub seed: u64,
    /// Overrides the experiment's number of paths or seeds.
    pub paths: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: String,
    pub description: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
}

impl Criterion {
    pub fn new(id: &str, description: impl Into<String>, passed: bool, observed: f64, threshold: f64) -> Self {
        Self {
            id: id.to_string(),
            description: description.into(),
            passed,
            observed,
            threshold,
        }
    }

    /// `observed ≤ threshold`.
    pub fn at_most(id: &str, description: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self::new(id, description, observed <= threshold, observed, threshold)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} (observed {:.6e}, threshold {:.6e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.description,
            self.observed,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub criteria: Vec<Criterion>,
    pub elapsed_secs: f64,
    pub details: serde_json::Value,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    fn timed(name: &str, start: Instant, limit_secs: f64, mut criteria: Vec<Criterion>, details: serde_json::Value) -> Self {
        let elapsed = start.elapsed().as_secs_f64();
        criteria.push(Criterion::at_most(
            &format!("{name}-runtime"),
            "wall-clock seconds",
            elapsed,
            limit_secs,
        ));
        Self {
            name: name.to_string(),
            criteria,
            elapsed_secs: elapsed,
            details,
        }
    }
}

/// Runs the experiment called `name` (case-insensitive).
pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    match name.to_ascii_uppercase().as_str() {
        "E1" => run_e1(opts),
        "E2" => run_e2(opts),
        "E3" => run_e3(opts),
        "E4" => run_e4(opts),
        "E5" => run_e5(opts),
        _ => Err(Error::Config(format!(
            "unknown experiment '{name}' (expected one of {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Geometric profile of the two-state sticky chain, `φ(k) = (1 − p)^k`.
pub fn sticky_profile(p: f64) -> Result<MixingProfile> {
    MixingProfile::geometric(1.0, -(1.0 - p).ln(), 1.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
