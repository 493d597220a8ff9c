//! Finite-state Markov sources of dependent samples.
//!
//! Every shipped process has a finite sample space, so the stationary law,
//! the k-step conditional laws and the φ/β mixing coefficients are computed
//! exactly from matrix powers rather than estimated.
//!
//! Two conventions:
//! * φ(k) takes the worst single conditioning state. For a Markov chain the
//!   law of a future sample given any past event is a mixture of the
//!   state-conditioned laws, and TV to a fixed law is convex, so the
//!   supremum over events is attained at a state.
//! * β(k) averages over the chain started at π. If the initial law differs
//!   from π the average is taken over each marginal `initial · P^(t−1)` for
//!   `t ≤ BETA_HORIZON` and the worst one is reported.

mod builtin;
mod mixing;
mod path;

pub use builtin::{
    iid_uniform, parse_builtin, sticky_features, sticky_process, three_state_demo,
    ProcessDefinition,
};
pub use mixing::{Certifies, MixingKind, MixingProfile};
pub use path::{path_rng, SamplePath};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{matrix_power, min_eigenvalue, total_variation};

/// Horizon for the sup over t in β when the chain does not start at π.
pub const BETA_HORIZON: usize = 200;

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;
const MAX_SQUARINGS: usize = 64;

/// One emitted sample: a feature vector and an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub y: Option<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Option<f64>) -> Self {
        Self {
            x: DVector::from_vec(x),
            y,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// A finite-state chain with a deterministic emission per state.
#[derive(Debug, Clone)]
pub struct MarkovProcessModel {
    pub name: String,
    transition: DMatrix<f64>,
    emissions: Vec<Sample>,
    initial: DVector<f64>,
    /// state -> index of its distinct emitted sample
    emission_class: Vec<usize>,
    num_classes: usize,
}

impl MarkovProcessModel {
    pub fn new(
        name: impl Into<String>,
        transition: DMatrix<f64>,
        emissions: Vec<Sample>,
        initial: DVector<f64>,
    ) -> Result<Self> {
        let m = transition.nrows();
        if m == 0 || transition.ncols() != m {
            return Err(Error::param("transition must be a non-empty square matrix"));
        }
        if emissions.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: emissions.len(),
            });
        }
        if initial.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: initial.len(),
            });
        }
        for (i, row) in transition.row_iter().enumerate() {
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::param(format!("transition row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::param(format!("transition row {i} sums to {s}")));
            }
        }
        if initial.iter().any(|&v| v < 0.0) || (initial.sum() - 1.0).abs() > ROW_TOL {
            return Err(Error::param("initial vector is not a probability vector"));
        }
        let dim = emissions[0].dim();
        if emissions.iter().any(|s| s.dim() != dim) {
            return Err(Error::param("all emissions must share one dimension"));
        }

        let mut distinct: Vec<&Sample> = Vec::new();
        let mut emission_class = Vec::with_capacity(m);
        for e in &emissions {
            match distinct.iter().position(|d| *d == e) {
                Some(c) => emission_class.push(c),
                None => {
                    emission_class.push(distinct.len());
                    distinct.push(e);
                }
            }
        }
        let num_classes = distinct.len();
        Ok(Self {
            name: name.into(),
            transition,
            emissions,
            initial,
            emission_class,
            num_classes,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn emissions(&self) -> &[Sample] {
        &self.emissions
    }

    pub fn emission(&self, state: usize) -> &Sample {
        &self.emissions[state]
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    /// Replaces the initial law (e.g. to start the chain at π).
    pub fn with_initial(mut self, initial: DVector<f64>) -> Result<Self> {
        if initial.len() != self.num_states()
            || initial.iter().any(|&v| v < 0.0)
            || (initial.sum() - 1.0).abs() > ROW_TOL
        {
            return Err(Error::param("initial vector is not a probability vector"));
        }
        self.initial = initial;
        Ok(self)
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states() {
            return Err(Error::InvalidState {
                index: state,
                num_states: self.num_states(),
            });
        }
        Ok(())
    }

    /// Law of the state k steps after `state`: row `state` of `P^k`.
    pub fn conditional_distribution(&self, state: usize, k: usize) -> Result<DVector<f64>> {
        if k < 1 {
            return Err(Error::InvalidLag(k));
        }
        self.check_state(state)?;
        let pk = matrix_power(&self.transition, k);
        Ok(pk.row(state).transpose())
    }

    /// Pushes a law over states through the emission map.
    fn push_through_emission(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes];
        for (state, &mass) in dist.iter().enumerate() {
            out[self.emission_class[state]] += mass;
        }
        out
    }

    /// Per-state `2·TV(P^k(j, ·), π)` in sample space, given `P^k`.
    fn doubled_tv_rows(&self, pk: &DMatrix<f64>, stationary: &StationaryModel) -> Vec<f64> {
        let pi = self.push_through_emission(stationary.pi.as_slice());
        (0..self.num_states())
            .map(|j| {
                let row: Vec<f64> = pk.row(j).iter().copied().collect();
                2.0 * total_variation(&self.push_through_emission(&row), &pi)
            })
            .collect()
    }

    /// Exact φ(k).
    pub fn phi_coefficient(&self, stationary: &StationaryModel, k: usize) -> Result<f64> {
        if k < 1 {
            return Err(Error::InvalidLag(k));
        }
        let pk = matrix_power(&self.transition, k);
        Ok(self
            .doubled_tv_rows(&pk, stationary)
            .into_iter()
            .fold(0.0, f64::max))
    }

    /// Exact β(k) (see the module docs for the non-stationary start).
    pub fn beta_coefficient(&self, stationary: &StationaryModel, k: usize) -> Result<f64> {
        if k < 1 {
            return Err(Error::InvalidLag(k));
        }
        let pk = matrix_power(&self.transition, k);
        let tv = self.doubled_tv_rows(&pk, stationary);
        Ok(self.beta_from_rows(&tv, stationary))
    }

    /// Whether β is evaluated with the horizon-capped sup over t.
    pub fn beta_is_horizon_capped(&self, stationary: &StationaryModel) -> bool {
        (&self.initial - &stationary.pi).amax() > ROW_TOL
    }

    fn beta_from_rows(&self, tv: &[f64], stationary: &StationaryModel) -> f64 {
        let weighted = |w: &DVector<f64>| w.iter().zip(tv).map(|(a, b)| a * b).sum::<f64>();
        if !self.beta_is_horizon_capped(stationary) {
            return weighted(&stationary.pi);
        }
        let pt = self.transition.transpose();
        let mut marginal = self.initial.clone();
        let mut worst = weighted(&marginal);
        for _ in 1..BETA_HORIZON {
            marginal = &pt * marginal;
            worst = worst.max(weighted(&marginal));
        }
        worst
    }

    /// `(φ(k), β(k))` for `k = 1..=k_max`, computed incrementally.
    pub fn mixing_table(&self, stationary: &StationaryModel, k_max: usize) -> Vec<(f64, f64)> {
        let mut pk = self.transition.clone();
        let mut out = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            let tv = self.doubled_tv_rows(&pk, stationary);
            let phi = tv.iter().copied().fold(0.0, f64::max);
            out.push((phi, self.beta_from_rows(&tv, stationary)));
            pk = &pk * &self.transition;
        }
        out
    }

    /// Stationary law, second-moment matrix and its smallest eigenvalue.
    ///
    /// `P^(2^j)` is formed by repeated squaring until all rows agree; rows
    /// that never agree indicate a periodic or reducible chain.
    pub fn stationary_distribution(&self) -> Result<StationaryModel> {
        let m = self.num_states();
        let mut power = self.transition.clone();
        let mut converged = false;
        for _ in 0..MAX_SQUARINGS {
            let spread = (0..m)
                .map(|i| (power.row(i) - power.row(0)).amax())
                .fold(0.0, f64::max);
            if spread <= 1e-13 {
                converged = true;
                break;
            }
            power = &power * &power;
        }
        if !converged {
            return Err(Error::NonErgodic(format!(
                "rows of P^(2^{MAX_SQUARINGS}) did not agree for '{}'",
                self.name
            )));
        }
        let pt = self.transition.transpose();
        let mut pi: DVector<f64> = power.row(0).transpose();
        for _ in 0..4 {
            pi = &pt * pi;
            pi /= pi.sum();
        }
        let residual = (&pt * &pi - &pi).amax();
        if residual > STATIONARY_TOL {
            return Err(Error::NonErgodic(format!(
                "stationary residual {residual:e} for '{}'",
                self.name
            )));
        }

        let d = self.dim();
        let mut second_moment = DMatrix::<f64>::zeros(d, d);
        for (j, e) in self.emissions.iter().enumerate() {
            second_moment += &e.x * e.x.transpose() * pi[j];
        }
        let lambda_min = min_eigenvalue(&second_moment);
        Ok(StationaryModel {
            pi,
            covariance: second_moment,
            lambda_min,
        })
    }
}

/// Stationary quantities of a [`MarkovProcessModel`].
#[derive(Debug, Clone)]
pub struct StationaryModel {
    pub pi: DVector<f64>,
    /// `E_π[x xᵀ]`. This uncentered moment is the matrix that controls the
    /// curvature of a linear-prediction risk.
    pub covariance: DMatrix<f64>,
    pub lambda_min: f64,
}
