//! Exact risks of trained predictors and exact checks of the inequalities
//! that turn regret and stability into generalization.
//!
//! Every conditional expectation here is computed from matrix powers of the
//! transition matrix, so the checks carry no sampling noise.

mod blocks;
mod coverage;

pub use blocks::{index_sets, MartingaleDiagnostics};
pub use coverage::{
    bound_inputs, coverage_run, monte_carlo_coverage, summarize, CoverageReport, CoverageSpec, RunRecord,
};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learner::{best_fixed_comparator, regret, RunLedger};
use crate::linalg::{matrix_power, minimize_over_ball, MinimizeOptions};
use crate::loss::{BaseLoss, LossModel};
use crate::process::{path_rng, MarkovProcessModel, Sample, StationaryModel};

/// Slack allowed on the exact lemma-type inequalities.
pub const EXACT_TOL: f64 = 1e-10;
/// Slack allowed on the trajectory-level inequalities.
pub const TRACE_TOL: f64 = 1e-8;

/// Minimizer of the stationary risk over the loss domain.
pub fn exact_minimizer(
    loss: &LossModel,
    stationary: &StationaryModel,
    model: &MarkovProcessModel,
) -> Result<DVector<f64>> {
    let dom = &loss.domain;
    if loss.kind.base() == BaseLoss::Linear && loss.kind.ridge() == 0.0 {
        let mut mean = DVector::zeros(dom.dim());
        for (p, z) in stationary.pi.iter().zip(model.emissions()) {
            mean += &z.x * *p;
        }
        let norm = mean.norm();
        if norm < 1e-15 {
            return Ok(dom.center.clone());
        }
        return Ok(&dom.center - mean * (dom.radius() / norm));
    }
    let objective = |w: &DVector<f64>| {
        (
            loss.expected_risk(stationary, model, w),
            loss.expected_risk_gradient(stationary, model, w),
        )
    };
    minimize_over_ball(objective, &dom.center, dom.radius(), &dom.center, MinimizeOptions::default())
}

/// `f(w) − f(w*)`.
pub fn excess_risk(
    w: &DVector<f64>,
    loss: &LossModel,
    stationary: &StationaryModel,
    model: &MarkovProcessModel,
    w_star: &DVector<f64>,
) -> f64 {
    loss.expected_risk(stationary, model, w) - loss.expected_risk(stationary, model, w_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FutureRisk {
    pub exact: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// Whether the Monte-Carlo mean lies within 4 standard errors of the
    /// exact value.
    pub agrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Check {
    /// Conditional excess over the unconditional one at the given state.
    pub lhs: f64,
    /// `GR·φ(τ)`.
    pub rhs: f64,
    /// π-average of `|lhs|` over conditioning states.
    pub averaged_abs: f64,
    /// `GR·β(τ)`.
    pub averaged_rhs: f64,
}

impl Lemma1Check {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + EXACT_TOL && self.averaged_abs <= self.averaged_rhs + EXACT_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds_within(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Pieces of the inequality bounding cumulative excess risk along a run by
/// regret, stability and a lagged martingale sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MasterInequalityReport {
    pub tau: usize,
    /// `Σ_t f(w(t)) − f(w*)`.
    pub lhs: f64,
    pub rhs: f64,
    /// Regret against the empirical minimizer of the training losses.
    pub regret: f64,
    pub kappa_sum: f64,
    /// Regret against `w*`.
    pub t1: f64,
    /// `Σ_{t≤n−τ} F(w(t); ξ_{t+τ}) − F(w(t+τ); ξ_{t+τ})`.
    pub t2: f64,
    /// Boundary terms of the lag shift.
    pub t3: f64,
    /// `Σ_t f(w(t)) − F(w(t); ξ_{t+τ}) + F(w*; ξ_{t+τ}) − f(w*)`.
    pub martingale_sum: f64,
    /// `|lhs − (t1 + t2 + t3 + martingale_sum)|`.
    pub identity_residual: f64,
}

impl MasterInequalityReport {
    pub fn holds(&self, g: f64, r: f64) -> bool {
        let tau = self.tau as f64;
        self.lhs <= self.rhs + TRACE_TOL
            && self.t1 <= self.regret + TRACE_TOL
            && self.t2 <= g * tau * self.kappa_sum + TRACE_TOL
            && self.t3 <= 2.0 * tau * g * r + TRACE_TOL
            && self.identity_residual <= TRACE_TOL * self.lhs.abs().max(1.0)
    }
}

/// Exact evaluator for one (chain, loss, comparator) triple.
pub struct Evaluator<'a> {
    pub model: &'a MarkovProcessModel,
    pub stationary: &'a StationaryModel,
    pub loss: &'a LossModel,
    pub w_star: DVector<f64>,
    pub f_star: f64,
}

impl<'a> Evaluator<'a> {
    /// Uses the exact minimizer of `f` as the comparator.
    pub fn new(
        model: &'a MarkovProcessModel,
        stationary: &'a StationaryModel,
        loss: &'a LossModel,
    ) -> Result<Self> {
        let w_star = exact_minimizer(loss, stationary, model)?;
        Ok(Self::with_comparator(model, stationary, loss, w_star))
    }

    pub fn with_comparator(
        model: &'a MarkovProcessModel,
        stationary: &'a StationaryModel,
        loss: &'a LossModel,
        w_star: DVector<f64>,
    ) -> Self {
        let f_star = loss.expected_risk(stationary, model, &w_star);
        Self {
            model,
            stationary,
            loss,
            w_star,
            f_star,
        }
    }

    pub fn risk(&self, w: &DVector<f64>) -> f64 {
        self.loss.expected_risk(self.stationary, self.model, w)
    }

    pub fn excess_risk(&self, w: &DVector<f64>) -> f64 {
        self.risk(w) - self.f_star
    }

    fn gr(&self) -> f64 {
        self.loss.lipschitz_g * self.loss.diameter()
    }

    /// Per-state loss values `F(w; emission(j))`, shifted.
    fn state_losses(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.model.num_states(),
            self.model
                .emissions()
                .iter()
                .map(|z| self.loss.raw_value(w, z) + self.loss.shift),
        )
    }

    fn state_differences(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.state_losses(w) - self.state_losses(v)
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.model.num_states() {
            return Err(Error::InvalidState {
                index: state,
                num_states: self.model.num_states(),
            });
        }
        Ok(())
    }

    /// `(1/k) Σ_{i=1}^{k} E[F(w; ξ_{n+i}) − F(w*; ξ_{n+i}) | state_n]`.
    pub fn future_risk_exact(&self, w: &DVector<f64>, state: usize, k_test: usize) -> Result<f64> {
        self.check_state(state)?;
        if k_test < 1 {
            return Err(Error::param("k_test must be at least 1"));
        }
        let diff = self.state_differences(w, &self.w_star);
        let p = self.model.transition();
        let mut law = DVector::zeros(self.model.num_states());
        law[state] = 1.0;
        let mut total = 0.0;
        for _ in 0..k_test {
            law = p.tr_mul(&law);
            total += law.dot(&diff);
        }
        Ok(total / k_test as f64)
    }

    /// Exact future risk plus a Monte-Carlo estimate from `n_mc` fresh
    /// continuations of the chain from `state`. Continuation `c` draws from
    /// the stream `(seed, c)`.
    pub fn future_risk(
        &self,
        w: &DVector<f64>,
        state: usize,
        k_test: usize,
        n_mc: usize,
        seed: u64,
    ) -> Result<FutureRisk> {
        let exact = self.future_risk_exact(w, state, k_test)?;
        if n_mc < 2 {
            return Err(Error::param("n_mc must be at least 2"));
        }
        let diff = self.state_differences(w, &self.w_star);
        let draws: Vec<f64> = (0..n_mc)
            .map(|c| {
                let mut rng = path_rng(seed, c as u64);
                let states = self.model.continue_from(state, k_test, &mut rng);
                states.iter().map(|&s| diff[s]).sum::<f64>() / k_test as f64
            })
            .collect();
        let m = n_mc as f64;
        let mc_mean = draws.iter().sum::<f64>() / m;
        let var = draws.iter().map(|d| (d - mc_mean).powi(2)).sum::<f64>() / (m - 1.0);
        let mc_std_error = (var / m).sqrt();
        let agrees = (mc_mean - exact).abs() <= 4.0 * mc_std_error + 1e-12;
        Ok(FutureRisk {
            exact,
            mc_mean,
            mc_std_error,
            agrees,
        })
    }

    /// Future risk of a fixed `w` against
    /// `f(w) − f(w*) + φ(τ)GR + (τ−1)GR/k`.
    pub fn proposition1_check(
        &self,
        w: &DVector<f64>,
        state: usize,
        k_test: usize,
        tau: usize,
    ) -> Result<InequalityCheck> {
        if tau < 1 {
            return Err(Error::InvalidTau(tau));
        }
        let lhs = self.future_risk_exact(w, state, k_test)?;
        let phi = self.model.phi_coefficient(self.stationary, tau)?;
        let gr = self.gr();
        let rhs = self.excess_risk(w) + phi * gr + (tau - 1) as f64 * gr / k_test as f64;
        Ok(InequalityCheck { lhs, rhs })
    }

    /// Conditional expectation of `F(w; ξ_{t+τ}) − F(v; ξ_{t+τ})` given the
    /// state at time `t`, minus `f(w) − f(v)`.
    pub fn lemma1_check(
        &self,
        w: &DVector<f64>,
        v: &DVector<f64>,
        state: usize,
        tau: usize,
    ) -> Result<Lemma1Check> {
        self.check_state(state)?;
        if tau < 1 {
            return Err(Error::InvalidLag(tau));
        }
        let diff = self.state_differences(w, v);
        let unconditional = self.stationary.pi.dot(&diff);
        let conditional = matrix_power(self.model.transition(), tau) * &diff;
        let gaps = conditional.add_scalar(-unconditional);
        let averaged_abs = self.stationary.pi.dot(&gaps.abs());
        let gr = self.gr();
        Ok(Lemma1Check {
            lhs: gaps[state],
            rhs: gr * self.model.phi_coefficient(self.stationary, tau)?,
            averaged_abs,
            averaged_rhs: gr * self.model.beta_coefficient(self.stationary, tau)?,
        })
    }

    /// Decomposes `Σ_t f(w(t)) − f(w*)` along a stored run. `samples` must
    /// extend at least `τ` beyond the `n` training rounds.
    pub fn master_inequality_check(
        &self,
        ledger: &RunLedger,
        samples: &[Sample],
        tau: usize,
    ) -> Result<MasterInequalityReport> {
        let iterates = ledger.iterates.as_ref().ok_or(Error::TraceMissing)?;
        let n = ledger.n;
        if tau < 1 {
            return Err(Error::InvalidTau(tau));
        }
        if samples.len() < n + tau {
            return Err(Error::LengthMismatch {
                expected: n + tau,
                actual: samples.len(),
            });
        }
        let loss = self.loss;
        let w_star = &self.w_star;
        let value = |w: &DVector<f64>, z: &Sample| loss.raw_value(w, z) + loss.shift;
        let train = &samples[..n];

        let t1 = regret(ledger, loss, train, w_star)?;
        let w_emp = best_fixed_comparator(loss, train, &loss.domain)?;
        let regret_value = regret(ledger, loss, train, &w_emp)?;
        let kappa_sum = ledger.kappa_sum();

        let mut lhs = 0.0;
        let mut martingale_sum = 0.0;
        for (t, w) in iterates.iter().enumerate() {
            let excess = self.excess_risk(w);
            lhs += excess;
            let z = &samples[t + tau];
            martingale_sum += excess - value(w, z) + value(w_star, z);
        }
        let mut t2 = 0.0;
        for t in 0..n.saturating_sub(tau) {
            let z = &samples[t + tau];
            t2 += value(&iterates[t], z) - value(&iterates[t + tau], z);
        }
        let edge = tau.min(n);
        let mut t3 = 0.0;
        for t in n - edge..n {
            t3 += value(&iterates[t], &samples[t + tau]);
        }
        for t in 0..edge {
            t3 += value(w_star, &samples[t]) - value(&iterates[t], &samples[t]);
        }
        for t in n..n + edge {
            t3 -= value(w_star, &samples[t]);
        }
        let identity_residual = (lhs - (t1 + t2 + t3 + martingale_sum)).abs();
        let g = loss.lipschitz_g;
        let tau_f = tau as f64;
        let rhs = regret_value + g * tau_f * kappa_sum + 2.0 * tau_f * g * loss.diameter() + martingale_sum;
        Ok(MasterInequalityReport {
            tau,
            lhs,
            rhs,
            regret: regret_value,
            kappa_sum,
            t1,
            t2,
            t3,
            martingale_sum,
            identity_residual,
        })
    }

    /// Probe hypotheses: the center, the two edge points along each axis
    /// and `n_random` seeded interior points.
    pub fn probe_points(&self, n_random: usize, seed: u64) -> Vec<DVector<f64>> {
        probe_points(&self.loss.domain, n_random, seed)
    }
}

pub fn probe_points(domain: &crate::loss::Domain, n_random: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::Rng;
    let d = domain.dim();
    let r = domain.radius();
    let mut out = vec![domain.center.clone()];
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            let mut w = domain.center.clone();
            w[axis] += sign * r;
            out.push(w);
        }
    }
    let mut rng = path_rng(seed, 0);
    while out.len() < 1 + 2 * d + n_random {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            out.push(&domain.center + v * r);
        }
    }
    out
}
