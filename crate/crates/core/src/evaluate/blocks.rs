use nalgebra::DVector;
use serde::Serialize;

use super::{Evaluator, EXACT_TOL, TRACE_TOL};
use crate::error::{Error, Result};
use crate::learner::{best_fixed_comparator, regret, RunLedger};
use crate::linalg::{matrix_power, total_variation};
use crate::process::Sample;

/// `T(i)` for `i = 1..τ`: block `i` holds the rounds `(t−1)τ + i`.
pub fn index_sets(n: usize, tau: usize) -> Result<Vec<Vec<usize>>> {
    if tau < 1 || tau > n {
        return Err(Error::InvalidTau(tau));
    }
    let full = n / tau;
    let extra = n - tau * full;
    Ok((1..=tau)
        .map(|i| {
            let len = if i <= extra { full + 1 } else { full };
            (1..=len).collect()
        })
        .collect())
}

/// The run's lag-`(τ−1)` martingale sum split into `τ` interleaved blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleDiagnostics {
    pub tau: usize,
    pub index_sets: Vec<Vec<usize>>,
    /// `Z_t^i = f(w(u)) − f(w*) + F(w*; ξ_{u+τ−1}) − F(w(u); ξ_{u+τ−1})`
    /// with `u = (t−1)τ + i`.
    pub z_values: Vec<Vec<f64>>,
    /// The same sum taken round by round.
    pub m_n: f64,
    /// `|m_n − Σ_i Σ_t Z_t^i|`.
    pub identity_residual: f64,
    /// `Σ_{t∈T(i)} F(w(u); ξ_{u+τ−1}) − F(w*; ξ_{u+τ−1})`.
    pub s_hat: Vec<f64>,
    /// `Σ_{t∈T(i)} f(w(u)) − f(w*)`.
    pub s: Vec<f64>,
    /// Regret against the empirical minimizer.
    pub regret: f64,
    pub kappa_sum: f64,
    /// `R_n + 2(τ−1)GR + (τ−1)G·Σκ`, the bound on `Σ_i Ŝ_i`.
    pub s_hat_bound: f64,
    /// `E[Z_t^i | past]` per block, when states were supplied.
    pub conditional_means: Option<Vec<Vec<f64>>>,
    /// Largest `E[Z_t^i | past]` minus its mixing bound.
    pub max_conditional_excess: Option<f64>,
}

impl MartingaleDiagnostics {
    pub fn holds(&self) -> bool {
        let total: f64 = self.s_hat.iter().sum();
        self.identity_residual <= EXACT_TOL
            && total <= self.s_hat_bound + TRACE_TOL
            && self.max_conditional_excess.is_none_or(|e| e <= EXACT_TOL)
    }
}

impl Evaluator<'_> {
    /// Builds `T(i)` and `Z_t^i` along a stored run. `samples` must hold at
    /// least `n + τ − 1` entries. With `states` (the chain's state at every
    /// sample) the conditional means are computed exactly and compared with
    /// `GR·φ(τ)`; the first round, which has no past, is compared with
    /// `GR·2TV(initial·P^(τ−1), π)`.
    pub fn block_decomposition(
        &self,
        ledger: &RunLedger,
        samples: &[Sample],
        states: Option<&[usize]>,
        tau: usize,
    ) -> Result<MartingaleDiagnostics> {
        let iterates = ledger.iterates.as_ref().ok_or(Error::TraceMissing)?;
        let n = ledger.n;
        let sets = index_sets(n, tau)?;
        let needed = n + tau - 1;
        if samples.len() < needed {
            return Err(Error::LengthMismatch {
                expected: needed,
                actual: samples.len(),
            });
        }
        if let Some(s) = states {
            if s.len() < needed {
                return Err(Error::LengthMismatch {
                    expected: needed,
                    actual: s.len(),
                });
            }
        }
        let loss = self.loss;
        let value = |w: &DVector<f64>, z: &Sample| loss.raw_value(w, z) + loss.shift;
        let excess: Vec<f64> = iterates.iter().map(|w| self.excess_risk(w)).collect();
        let lagged = |u: usize| &samples[u + tau - 2];

        let mut m_n = 0.0;
        for u in 1..=n {
            let z = lagged(u);
            m_n += excess[u - 1] + value(&self.w_star, z) - value(&iterates[u - 1], z);
        }

        let gr = self.gr();
        let exact = match states {
            Some(states) => {
                let pt = matrix_power(self.model.transition(), tau);
                let start = matrix_power(self.model.transition(), tau - 1).tr_mul(self.model.initial());
                let start_bound = gr
                    * 2.0
                    * total_variation(start.as_slice(), self.stationary.pi.as_slice());
                let phi_bound = gr * self.model.phi_coefficient(self.stationary, tau)?;
                Some((states, pt, start, start_bound, phi_bound))
            }
            None => None,
        };

        let mut z_values = Vec::with_capacity(tau);
        let mut s_hat = Vec::with_capacity(tau);
        let mut s = Vec::with_capacity(tau);
        let mut cond_all = exact.as_ref().map(|_| Vec::with_capacity(tau));
        let mut max_excess = f64::NEG_INFINITY;
        for (block, set) in sets.iter().enumerate() {
            let i = block + 1;
            let mut zs = Vec::with_capacity(set.len());
            let mut conds = Vec::new();
            let (mut sh, mut si) = (0.0, 0.0);
            for &t in set {
                let u = (t - 1) * tau + i;
                let w = &iterates[u - 1];
                let z = lagged(u);
                let loss_gap = value(w, z) - value(&self.w_star, z);
                zs.push(excess[u - 1] - loss_gap);
                sh += loss_gap;
                si += excess[u - 1];
                if let Some((states, pt, start, start_bound, phi_bound)) = &exact {
                    let diff = self.state_differences(&self.w_star, w);
                    let (law, bound) = if u == 1 {
                        (start.clone(), *start_bound)
                    } else {
                        (pt.row(states[u - 2]).transpose(), *phi_bound)
                    };
                    let mean = excess[u - 1] + law.dot(&diff);
                    max_excess = max_excess.max(mean - bound);
                    conds.push(mean);
                }
            }
            z_values.push(zs);
            s_hat.push(sh);
            s.push(si);
            if let Some(c) = cond_all.as_mut() {
                c.push(conds);
            }
        }
        let block_total: f64 = z_values.iter().flatten().sum();

        let train = &samples[..n];
        let w_emp = best_fixed_comparator(loss, train, &loss.domain)?;
        let regret_value = regret(ledger, loss, train, &w_emp)?;
        let kappa_sum = ledger.kappa_sum();
        let lag = (tau - 1) as f64;
        let s_hat_bound = regret_value + 2.0 * lag * gr + lag * loss.lipschitz_g * kappa_sum;
        Ok(MartingaleDiagnostics {
            tau,
            index_sets: sets,
            z_values,
            m_n,
            identity_residual: (m_n - block_total).abs(),
            s_hat,
            s,
            regret: regret_value,
            kappa_sum,
            s_hat_bound,
            conditional_means: cond_all,
            max_conditional_excess: exact.map(|_| max_excess),
        })
    }
}
