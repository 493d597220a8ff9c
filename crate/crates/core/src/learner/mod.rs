//! Online learners, run bookkeeping, regret and the best fixed comparator.

mod dual_averaging;
mod ftal_vaw;
mod ledger;
mod ogd;

pub use dual_averaging::{DualAveragingState, StepMode};
pub use ftal_vaw::{FtalPrediction, FtalVawState};
pub use ledger::RunLedger;
pub use ogd::OgdState;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{minimize_over_ball, MinimizeOptions};
use crate::loss::{BaseLoss, Domain, LossModel};
use crate::process::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DaConvex,
    DaStrong,
    OgdConvex,
    OgdStrong,
    FtalVaw,
    BadFtl,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::DaConvex => "da-convex",
            Algorithm::DaStrong => "da-strong",
            Algorithm::OgdConvex => "ogd-convex",
            Algorithm::OgdStrong => "ogd-strong",
            Algorithm::FtalVaw => "ftal-vaw",
            Algorithm::BadFtl => "bad-ftl",
        }
    }

    pub fn is_strongly_convex(&self) -> bool {
        matches!(self, Algorithm::DaStrong | Algorithm::OgdStrong)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "da-convex" => Algorithm::DaConvex,
            "da-strong" => Algorithm::DaStrong,
            "ogd-convex" => Algorithm::OgdConvex,
            "ogd-strong" => Algorithm::OgdStrong,
            "ftal-vaw" => Algorithm::FtalVaw,
            "bad-ftl" => Algorithm::BadFtl,
            other => return Err(Error::Config(format!("unknown algorithm '{other}'"))),
        })
    }
}

/// Hyperparameters shared by the learners. `None` falls back to the loss
/// model's constants.
#[derive(Debug, Clone, Copy, Default)]
pub struct LearnerParams {
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
}

/// An online learner driven one sample at a time.
pub trait OnlineLearner {
    /// Iterate `w(t)` for the round whose sample is `z`. Only the features
    /// of `z` may be used here.
    fn play(&mut self, z: &Sample) -> Result<DVector<f64>>;
    /// Reveals the full sample after `w(t)` was played.
    fn observe(&mut self, z: &Sample, w: &DVector<f64>, loss: &LossModel) -> Result<()>;
    /// `w(t+1)` when it does not depend on the next sample.
    fn lookahead(&self) -> Option<DVector<f64>>;
}

pub struct DaLearner(pub DualAveragingState, pub Domain);
pub struct OgdLearner(pub OgdState, pub Domain);

impl OnlineLearner for DaLearner {
    fn play(&mut self, _z: &Sample) -> Result<DVector<f64>> {
        Ok(self.0.w.clone())
    }

    fn observe(&mut self, z: &Sample, w: &DVector<f64>, loss: &LossModel) -> Result<()> {
        let g = loss.subgradient(w, z)?;
        self.0.step(&self.1, &g).map(|_| ())
    }

    fn lookahead(&self) -> Option<DVector<f64>> {
        Some(self.0.w.clone())
    }
}

impl OnlineLearner for OgdLearner {
    fn play(&mut self, _z: &Sample) -> Result<DVector<f64>> {
        Ok(self.0.w.clone())
    }

    fn observe(&mut self, z: &Sample, w: &DVector<f64>, loss: &LossModel) -> Result<()> {
        let g = loss.subgradient(w, z)?;
        self.0.step(&self.1, &g).map(|_| ())
    }

    fn lookahead(&self) -> Option<DVector<f64>> {
        Some(self.0.w.clone())
    }
}

pub struct FtalLearner {
    pub state: FtalVawState,
    domain: Domain,
    /// `‖x_t‖²` in the dual norm of `A_{t,ε}`, per round.
    pub dual_norms_sq: Vec<f64>,
    pub max_kkt_residual: f64,
}

impl FtalLearner {
    pub fn new(loss: &LossModel, params: LearnerParams) -> Result<Self> {
        ftal_vaw::prediction_base(loss)?;
        let sigma = params.sigma.unwrap_or(loss.scalar_strong_sigma);
        let state = FtalVawState::new(loss.domain.dim(), params.epsilon.unwrap_or(1.0), sigma)?;
        Ok(Self {
            state,
            domain: loss.domain.clone(),
            dual_norms_sq: Vec::new(),
            max_kkt_residual: 0.0,
        })
    }
}

impl OnlineLearner for FtalLearner {
    fn play(&mut self, z: &Sample) -> Result<DVector<f64>> {
        let p = self.state.predict(&self.domain, &z.x)?;
        self.dual_norms_sq.push(p.dual_norm_sq);
        self.max_kkt_residual = self.max_kkt_residual.max(p.kkt_residual);
        Ok(p.w)
    }

    fn observe(&mut self, z: &Sample, w: &DVector<f64>, loss: &LossModel) -> Result<()> {
        self.state.update(loss, &z.x, z.y.unwrap_or(0.0), w)
    }

    fn lookahead(&self) -> Option<DVector<f64>> {
        None
    }
}

/// Follow-the-leader on linear losses: `w(1) = c`, then `w(t) = −ξ_{t−1}`.
pub struct BadFtl {
    next: DVector<f64>,
    domain: Domain,
}

impl BadFtl {
    pub fn new(domain: &Domain) -> Self {
        Self {
            next: domain.center.clone(),
            domain: domain.clone(),
        }
    }
}

/// The follow-the-leader move after seeing `z_prev`.
pub fn bad_ftl_step(z_prev: &Sample) -> DVector<f64> {
    -&z_prev.x
}

impl OnlineLearner for BadFtl {
    fn play(&mut self, _z: &Sample) -> Result<DVector<f64>> {
        Ok(self.next.clone())
    }

    fn observe(&mut self, z: &Sample, _w: &DVector<f64>, _loss: &LossModel) -> Result<()> {
        self.next = self.domain.project(&bad_ftl_step(z));
        Ok(())
    }

    fn lookahead(&self) -> Option<DVector<f64>> {
        Some(self.next.clone())
    }
}

/// Builds the learner named by `algorithm` for `loss`.
pub fn build_learner(
    algorithm: Algorithm,
    loss: &LossModel,
    params: LearnerParams,
) -> Result<Box<dyn OnlineLearner + Send>> {
    let dom = loss.domain.clone();
    let g = loss.lipschitz_g;
    let lambda = params.lambda.unwrap_or(loss.strong_lambda);
    Ok(match algorithm {
        Algorithm::DaConvex => Box::new(DaLearner(DualAveragingState::convex(&dom, g), dom)),
        Algorithm::DaStrong => Box::new(DaLearner(
            DualAveragingState::strongly_convex(&dom, g, lambda)?,
            dom,
        )),
        Algorithm::OgdConvex => Box::new(OgdLearner(OgdState::convex(&dom, g), dom)),
        Algorithm::OgdStrong => Box::new(OgdLearner(OgdState::strongly_convex(&dom, g, lambda)?, dom)),
        Algorithm::FtalVaw => Box::new(FtalLearner::new(loss, params)?),
        Algorithm::BadFtl => Box::new(BadFtl::new(&dom)),
    })
}

/// Runs `learner` over `samples`, recording losses, stability and the
/// averaged predictor.
pub fn run_online(
    learner: &mut dyn OnlineLearner,
    loss: &LossModel,
    samples: &[Sample],
    store_iterates: bool,
) -> Result<RunLedger> {
    let mut ledger = RunLedger::new(loss.domain.dim(), store_iterates);
    for z in samples {
        let w = learner.play(z)?;
        let value = loss.loss_value(&w, z)?;
        ledger.record(&w, value);
        learner.observe(z, &w, loss)?;
    }
    ledger.finish(learner.lookahead().as_ref());
    Ok(ledger)
}

/// `Σ_t F(w(t); z_t) − F(w*; z_t)`.
pub fn regret(ledger: &RunLedger, loss: &LossModel, samples: &[Sample], w_star: &DVector<f64>) -> Result<f64> {
    if samples.len() != ledger.n {
        return Err(Error::LengthMismatch {
            expected: ledger.n,
            actual: samples.len(),
        });
    }
    let mut total = 0.0;
    for (fw, z) in ledger.step_losses.iter().zip(samples) {
        total += fw - loss.loss_value(w_star, z)?;
    }
    Ok(total)
}

/// Collapses repeated samples into (sample, multiplicity) pairs, in order of
/// first appearance.
pub fn aggregate_samples(samples: &[Sample]) -> Vec<(Sample, f64)> {
    let mut index: HashMap<(Vec<u64>, Option<u64>), usize> = HashMap::new();
    let mut out: Vec<(Sample, f64)> = Vec::new();
    for z in samples {
        let key = (
            z.x.iter().map(|v| v.to_bits()).collect(),
            z.y.map(f64::to_bits),
        );
        match index.get(&key) {
            Some(&i) => out[i].1 += 1.0,
            None => {
                index.insert(key, out.len());
                out.push((z.clone(), 1.0));
            }
        }
    }
    out
}

/// Minimizer over `domain` of the empirical loss `Σ_t F(w; z_t)`.
pub fn best_fixed_comparator(loss: &LossModel, samples: &[Sample], domain: &Domain) -> Result<DVector<f64>> {
    let weighted = aggregate_samples(samples);
    let n: f64 = weighted.iter().map(|(_, m)| m).sum::<f64>().max(1.0);
    if loss.kind.base() == BaseLoss::Linear && loss.kind.ridge() == 0.0 {
        let mut s = DVector::zeros(domain.dim());
        for (z, m) in &weighted {
            s += &z.x * *m;
        }
        let norm = s.norm();
        if norm == 0.0 {
            return Ok(domain.center.clone());
        }
        return Ok(&domain.center - s * (domain.radius() / norm));
    }
    let objective = |w: &DVector<f64>| {
        let mut value = 0.0;
        let mut grad = DVector::zeros(w.len());
        for (z, m) in &weighted {
            value += m * loss.raw_value(w, z);
            grad += loss.raw_subgradient(w, z) * *m;
        }
        (value / n, grad / n)
    };
    minimize_over_ball(
        objective,
        &domain.center,
        domain.radius(),
        &domain.center,
        MinimizeOptions {
            tol: 1e-10,
            ..Default::default()
        },
    )
}
