//! Generalization bounds evaluated term by term, lag selection and the
//! martingale tail functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{MixingKind, MixingProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    ExpectedConvex,
    GeneralizationExpected,
    HighprobConvexPhi,
    HighprobConvexBeta,
    HighprobStrongPhi,
    HighprobStrongBeta,
    LinearGeneralization,
}

impl TheoremId {
    pub const ALL: [TheoremId; 7] = [
        TheoremId::ExpectedConvex,
        TheoremId::GeneralizationExpected,
        TheoremId::HighprobConvexPhi,
        TheoremId::HighprobConvexBeta,
        TheoremId::HighprobStrongPhi,
        TheoremId::HighprobStrongBeta,
        TheoremId::LinearGeneralization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::ExpectedConvex => "expected-convex",
            TheoremId::GeneralizationExpected => "generalization-expected",
            TheoremId::HighprobConvexPhi => "highprob-convex-phi",
            TheoremId::HighprobConvexBeta => "highprob-convex-beta",
            TheoremId::HighprobStrongPhi => "highprob-strong-phi",
            TheoremId::HighprobStrongBeta => "highprob-strong-beta",
            TheoremId::LinearGeneralization => "linear-generalization",
        }
    }

    /// Whether the bound's mixing term uses φ (otherwise β).
    pub fn uses_phi(&self) -> bool {
        matches!(
            self,
            TheoremId::HighprobConvexPhi | TheoremId::HighprobStrongPhi | TheoremId::LinearGeneralization
        )
    }

    pub fn evaluate(&self, inputs: &BoundInputs, tau: usize) -> Result<BoundReport> {
        match self {
            TheoremId::ExpectedConvex => expected_bound_convex(inputs, tau),
            TheoremId::GeneralizationExpected => generalization_expected(inputs, tau),
            TheoremId::HighprobConvexPhi => highprob_convex_phi(inputs, tau),
            TheoremId::HighprobConvexBeta => highprob_convex_beta(inputs, tau),
            TheoremId::HighprobStrongPhi => highprob_strong_phi(inputs, tau),
            TheoremId::HighprobStrongBeta => highprob_strong_beta(inputs, tau),
            TheoremId::LinearGeneralization => linear_generalization(inputs, tau),
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown theorem '{s}'")))
    }
}

/// Everything a bound may depend on. Unused fields are ignored by a given
/// theorem.
#[derive(Debug, Clone, Serialize)]
pub struct BoundInputs {
    pub n: usize,
    pub k_test: usize,
    pub delta: f64,
    /// Lipschitz constant `G`.
    pub g: f64,
    /// Domain diameter `R`.
    pub r: f64,
    /// Strong-convexity modulus of the risk.
    pub lambda: f64,
    pub l: f64,
    pub sigma: f64,
    pub x: f64,
    pub d: usize,
    pub lambda_min_cov: f64,
    pub mixing: MixingProfile,
    /// `Σ_{t≤n} κ(t)`.
    pub kappa_sum: f64,
    /// Realized regret or a bound on it.
    pub regret_value: f64,
    pub epsilon: f64,
    /// `‖w*‖²`.
    pub w_star_norm_sq: f64,
}

impl BoundInputs {
    pub fn new(n: usize, g: f64, r: f64, mixing: MixingProfile) -> Self {
        Self {
            n,
            k_test: 1,
            delta: 0.1,
            g,
            r,
            lambda: 0.0,
            l: 0.0,
            sigma: 0.0,
            x: 0.0,
            d: 1,
            lambda_min_cov: 0.0,
            mixing,
            kappa_sum: 0.0,
            regret_value: 0.0,
            epsilon: 1.0,
            w_star_norm_sq: 0.0,
        }
    }

    /// `K_n = Σκ / R`.
    pub fn k_n(&self) -> f64 {
        self.kappa_sum / self.r
    }

    fn validate(&self, tau: usize) -> Result<()> {
        if tau < 1 {
            return Err(Error::InvalidTau(tau));
        }
        if self.n < 1 {
            return Err(Error::param("n must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta {} outside (0, 1)", self.delta)));
        }
        let nonneg = [self.g, self.r, self.lambda, self.l, self.sigma, self.x, self.kappa_sum, self.epsilon];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::param("bound constants must be nonnegative"));
        }
        Ok(())
    }

    fn phi(&self, tau: usize) -> Result<f64> {
        self.mixing
            .phi(tau)
            .ok_or_else(|| Error::Unsupported("the mixing profile certifies only beta".into()))
    }

    fn beta(&self, tau: usize) -> f64 {
        self.mixing.beta(tau)
    }
}

/// Sum of `R/√t` for `t = 1..=n`.
pub fn kappa_sum_inv_sqrt(scale: f64, n: usize) -> f64 {
    (1..=n).map(|t| scale / (t as f64).sqrt()).sum()
}

/// Sum of `scale/t` for `t = 1..=n`.
pub fn kappa_sum_inv_linear(scale: f64, n: usize) -> f64 {
    (1..=n).map(|t| scale / t as f64).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub regret_term: f64,
    pub stability_term: f64,
    pub martingale_term: f64,
    pub mixing_term: f64,
    pub boundary_term: f64,
    pub comparator_term: f64,
}

impl BoundTerms {
    pub fn sum(&self) -> f64 {
        self.regret_term
            + self.stability_term
            + self.martingale_term
            + self.mixing_term
            + self.boundary_term
            + self.comparator_term
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("regret_term", self.regret_term),
            ("stability_term", self.stability_term),
            ("martingale_term", self.martingale_term),
            ("mixing_term", self.mixing_term),
            ("boundary_term", self.boundary_term),
            ("comparator_term", self.comparator_term),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: String,
    pub tau: usize,
    pub terms: BoundTerms,
    pub total: f64,
    /// Confidence the bound holds with; 1 for bounds in expectation.
    pub delta_effective: f64,
}

impl BoundReport {
    fn new(id: TheoremId, tau: usize, terms: BoundTerms, delta_effective: f64) -> Self {
        Self {
            theorem_id: id.as_str().to_string(),
            tau,
            total: terms.sum(),
            terms,
            delta_effective,
        }
    }
}

/// Expected excess risk of the averaged predictor:
/// `E[R_n]/n + β(τ)GR + ((τ−1)G/n)(2R + Σκ)`.
pub fn expected_bound_convex(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    let n = inp.n as f64;
    let lag = (tau - 1) as f64;
    let terms = BoundTerms {
        regret_term: inp.regret_value / n,
        stability_term: lag * inp.g * inp.kappa_sum / n,
        mixing_term: inp.beta(tau) * inp.g * inp.r,
        boundary_term: lag * inp.g * 2.0 * inp.r / n,
        ..Default::default()
    };
    Ok(BoundReport::new(TheoremId::ExpectedConvex, tau, terms, 1.0))
}

/// Expected future risk over `k_test` continuation samples:
/// `E[R_n]/n + 2β(τ)GR + (τ−1)GR(2/n + 1/k + Σκ/n)`.
pub fn generalization_expected(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    if inp.k_test < 1 {
        return Err(Error::param("k_test must be at least 1"));
    }
    let n = inp.n as f64;
    let k = inp.k_test as f64;
    let lag_gr = (tau - 1) as f64 * inp.g * inp.r;
    let terms = BoundTerms {
        regret_term: inp.regret_value / n,
        stability_term: lag_gr * inp.kappa_sum / n,
        mixing_term: 2.0 * inp.beta(tau) * inp.g * inp.r,
        boundary_term: lag_gr * (2.0 / n + 1.0 / k),
        ..Default::default()
    };
    Ok(BoundReport::new(TheoremId::GeneralizationExpected, tau, terms, 1.0))
}

/// With probability `1 − δ`:
/// `R_n/n + ((τ−1)G/n)Σκ + 2GR√((2τ/n)log(τ/δ)) + φ(τ)GR + 2(τ−1)GR/n`.
pub fn highprob_convex_phi(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    let n = inp.n as f64;
    let t = tau as f64;
    let lag = (tau - 1) as f64;
    let gr = inp.g * inp.r;
    let terms = BoundTerms {
        regret_term: inp.regret_value / n,
        stability_term: lag * inp.g * inp.kappa_sum / n,
        martingale_term: 2.0 * gr * (2.0 * t / n * (t / inp.delta).ln()).sqrt(),
        mixing_term: inp.phi(tau)? * gr,
        boundary_term: 2.0 * lag * gr / n,
        ..Default::default()
    };
    Ok(BoundReport::new(TheoremId::HighprobConvexPhi, tau, terms, 1.0 - inp.delta))
}

/// With probability `1 − 2δ`:
/// `R_n/n + ((τ−1)G/n)Σκ + 2GR√((2τ/n)log(2τ/δ)) + 2β(τ)GR/δ + 2(τ−1)GR/n`.
pub fn highprob_convex_beta(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    let n = inp.n as f64;
    let t = tau as f64;
    let lag = (tau - 1) as f64;
    let gr = inp.g * inp.r;
    let terms = BoundTerms {
        regret_term: inp.regret_value / n,
        stability_term: lag * inp.g * inp.kappa_sum / n,
        martingale_term: 2.0 * gr * (2.0 * t / n * (2.0 * t / inp.delta).ln()).sqrt(),
        mixing_term: 2.0 * inp.beta(tau) * gr / inp.delta,
        boundary_term: 2.0 * lag * gr / n,
        ..Default::default()
    };
    Ok(BoundReport::new(TheoremId::HighprobConvexBeta, tau, terms, 1.0 - 2.0 * inp.delta))
}

fn check_strong(inp: &BoundInputs) -> Result<()> {
    if inp.delta >= (-1.0f64).exp() {
        return Err(Error::DeltaTooLarge(inp.delta));
    }
    if inp.n < 3 {
        return Err(Error::param("strongly convex bounds need n ≥ 3"));
    }
    if !(inp.lambda > 0.0) {
        return Err(Error::param("strongly convex bounds need lambda > 0"));
    }
    Ok(())
}

/// Shared part of the strongly convex bounds; `log_rg` is the logarithm in
/// the `12τRG/n` term.
fn strong_terms(inp: &BoundInputs, tau: usize, log_rg: f64, mixing_term: f64) -> BoundTerms {
    let n = inp.n as f64;
    let t = tau as f64;
    let lag = (tau - 1) as f64;
    let log_td = (t / inp.delta).ln();
    BoundTerms {
        regret_term: 2.0 * inp.regret_value / n,
        stability_term: 2.0 * lag * inp.g * inp.kappa_sum / n,
        boundary_term: 4.0 * lag * inp.g * inp.r / n,
        martingale_term: 32.0 * inp.g * inp.g * t / (inp.lambda * n) * log_td
            + 12.0 * t * inp.r * inp.g / n * log_rg,
        mixing_term,
        comparator_term: 0.0,
    }
}

/// With probability `1 − 4δ log n`, for `δ < 1/e` and `n ≥ 3`:
/// `2R_n/n + (2(τ−1)G/n)(Σκ + 2R) + (32G²τ/(λn))log(τ/δ)
///  + (12τRG/n)log(τ/δ) + 2RGφ(τ)`.
pub fn highprob_strong_phi(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    check_strong(inp)?;
    let log_td = (tau as f64 / inp.delta).ln();
    let mixing = 2.0 * inp.r * inp.g * inp.phi(tau)?;
    let terms = strong_terms(inp, tau, log_td, mixing);
    let conf = 1.0 - 4.0 * inp.delta * (inp.n as f64).ln();
    Ok(BoundReport::new(TheoremId::HighprobStrongPhi, tau, terms, conf))
}

/// With probability `1 − 5δ log n`: as the φ version with `log(2τ/δ)` in
/// the `12τRG/n` term and `2RGβ(τ)/δ` as the mixing term.
pub fn highprob_strong_beta(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    check_strong(inp)?;
    let log_2td = (2.0 * tau as f64 / inp.delta).ln();
    let mixing = 2.0 * inp.r * inp.g * inp.beta(tau) / inp.delta;
    let terms = strong_terms(inp, tau, log_2td, mixing);
    let conf = 1.0 - 5.0 * inp.delta * (inp.n as f64).ln();
    Ok(BoundReport::new(TheoremId::HighprobStrongBeta, tau, terms, conf))
}

/// FTAL-VAW with `ε = 1`, with probability `1 − 4δ log n`:
/// `(L²d/(σn))(9 + 14τ)log(X²n + 1) + (σ/n)‖w*‖²
///  + (32L²X²τ/(σnλ_min))log(τ/δ) + (8τL²/(σn))(3log(τ/δ) + 1) + (4L²/σ)φ(τ)`.
pub fn linear_generalization(inp: &BoundInputs, tau: usize) -> Result<BoundReport> {
    inp.validate(tau)?;
    if !(inp.lambda_min_cov > 0.0) {
        return Err(Error::param("linear generalization needs a positive-definite second moment"));
    }
    if !(inp.sigma > 0.0) || inp.d < 1 {
        return Err(Error::param("linear generalization needs sigma > 0 and d ≥ 1"));
    }
    let n = inp.n as f64;
    let t = tau as f64;
    let l2 = inp.l * inp.l;
    let d = inp.d as f64;
    let log_x = (inp.x * inp.x * n + 1.0).ln();
    let log_td = (t / inp.delta).ln();
    let terms = BoundTerms {
        regret_term: 9.0 * l2 * d / (inp.sigma * n) * log_x,
        stability_term: 14.0 * t * l2 * d / (inp.sigma * n) * log_x,
        comparator_term: inp.sigma / n * inp.w_star_norm_sq,
        martingale_term: 32.0 * l2 * inp.x * inp.x * t / (inp.sigma * n * inp.lambda_min_cov) * log_td
            + 24.0 * t * l2 / (inp.sigma * n) * log_td,
        boundary_term: 8.0 * t * l2 / (inp.sigma * n),
        mixing_term: 4.0 * l2 / inp.sigma * inp.phi(tau)?,
    };
    let conf = 1.0 - 4.0 * inp.delta * n.ln();
    Ok(BoundReport::new(TheoremId::LinearGeneralization, tau, terms, conf))
}

/// Regret bound of FTAL-VAW:
/// `(9L²d/(2σ))log(X²n/ε + 1) + (σε/2)‖w*‖²`.
pub fn ftal_regret_bound(inp: &BoundInputs) -> Result<f64> {
    if !(inp.sigma > 0.0) || !(inp.epsilon > 0.0) {
        return Err(Error::param("FTAL regret bound needs sigma > 0 and epsilon > 0"));
    }
    let n = inp.n as f64;
    Ok(9.0 * inp.l * inp.l * inp.d as f64 / (2.0 * inp.sigma)
        * (inp.x * inp.x * n / inp.epsilon + 1.0).ln()
        + inp.sigma * inp.epsilon / 2.0 * inp.w_star_norm_sq)
}

/// Which mixing coefficient an adjustment or bound is phrased in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Phi,
    Beta,
}

/// Additive cost of moving from stationary excess risk to future risk over
/// `k_test` samples: `c(τ)GR + (τ−1)GR/k`.
pub fn stationary_to_test_adjustment(inp: &BoundInputs, tau: usize, which: Coefficient) -> Result<f64> {
    inp.validate(tau)?;
    if inp.k_test < 1 {
        return Err(Error::param("k_test must be at least 1"));
    }
    let coeff = match which {
        Coefficient::Phi => inp.phi(tau)?,
        Coefficient::Beta => inp.beta(tau),
    };
    let gr = inp.g * inp.r;
    Ok(coeff * gr + (tau - 1) as f64 * gr / inp.k_test as f64)
}

/// The lag suggested by the closed-form rule for the profile, rounded up
/// and clamped to `[1, n]`. `None` for tabulated profiles.
pub fn closed_form_tau(theorem: TheoremId, inp: &BoundInputs) -> Option<usize> {
    let n = inp.n.max(1);
    let nf = n as f64;
    let raw = match inp.mixing.kind {
        MixingKind::Iid => 1.0,
        MixingKind::Tabulated => return None,
        MixingKind::Geometric => {
            let m = &inp.mixing;
            if !(m.s > 0.0) {
                return None;
            }
            let base = if theorem.uses_phi() {
                nf.ln() / (2.0 * m.phi1)
            } else {
                1.5 * nf.ln() / m.phi1
            };
            base.powf(1.0 / m.s)
        }
        MixingKind::Algebraic => {
            let m = &inp.mixing;
            let k_n = inp.k_n();
            if k_n > 0.0 {
                (m.phi0 * nf / k_n).powf(1.0 / (m.theta + 1.0))
            } else {
                f64::INFINITY
            }
        }
    };
    let tau = if raw.is_nan() { nf } else { raw.ceil().min(nf) };
    Some(tau.max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauChoice {
    pub tau: usize,
    pub report: BoundReport,
    pub closed_form_tau: Option<usize>,
    pub closed_form_report: Option<BoundReport>,
}

/// Minimizes the theorem's total over `τ ∈ [1, n]` and reports the
/// closed-form lag next to it.
pub fn optimize_tau(theorem: TheoremId, inp: &BoundInputs) -> Result<TauChoice> {
    let mut best: Option<BoundReport> = None;
    for tau in 1..=inp.n.max(1) {
        let r = theorem.evaluate(inp, tau)?;
        if best.as_ref().is_none_or(|b| r.total < b.total) {
            best = Some(r);
        }
    }
    let report = best.expect("grid is non-empty");
    let closed_form_tau = closed_form_tau(theorem, inp);
    let closed_form_report = closed_form_tau.map(|t| theorem.evaluate(inp, t)).transpose()?;
    Ok(TauChoice {
        tau: report.tau,
        report,
        closed_form_tau,
        closed_form_report,
    })
}

/// Resolves an "auto" lag: the closed form when the profile has one,
/// otherwise the grid minimizer.
pub fn auto_tau(theorem: TheoremId, inp: &BoundInputs) -> Result<usize> {
    match closed_form_tau(theorem, inp) {
        Some(t) => Ok(t),
        None => optimize_tau(theorem, inp).map(|c| c.tau),
    }
}

/// Azuma–Hoeffding tail for one block sum: `exp(−τγ²/(8n b²))` with
/// `b = GR`.
pub fn azuma_tail(b_bound: f64, n: usize, tau: usize, gamma: f64) -> f64 {
    (-(tau as f64) * gamma * gamma / (8.0 * n as f64 * b_bound * b_bound)).exp()
}

/// Freedman threshold `max{2√V, 3b√log(1/δ)}·√log(1/δ)`, exceeded with
/// probability at most [`freedman_failure_mass`].
pub fn freedman_threshold(v: f64, b: f64, delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0) || delta >= (-1.0f64).exp() {
        return Err(Error::DeltaTooLarge(delta));
    }
    if n < 3 {
        return Err(Error::param("Freedman threshold needs n ≥ 3"));
    }
    let log = (1.0 / delta).ln();
    Ok((2.0 * v.sqrt()).max(3.0 * b * log.sqrt()) * log.sqrt())
}

/// `4δ log n`.
pub fn freedman_failure_mass(delta: f64, n: usize) -> f64 {
    4.0 * delta * (n as f64).ln()
}
