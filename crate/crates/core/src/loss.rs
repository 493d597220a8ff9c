//! Loss families, their constants and exact stationary risks.
//!
//! The domain is a Euclidean ball whose *diameter* is `R`, so any two
//! hypotheses are at most `R` apart and the ball radius is `R/2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::project_ball;
use crate::process::{MarkovProcessModel, Sample, StationaryModel};

const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub center: DVector<f64>,
    /// Diameter `R`.
    pub diameter: f64,
}

impl Domain {
    pub fn new(center: DVector<f64>, diameter: f64) -> Result<Self> {
        if !(diameter > 0.0) || !diameter.is_finite() {
            return Err(Error::param(format!("domain diameter {diameter} must be positive")));
        }
        Ok(Self { center, diameter })
    }

    /// Ball of diameter `diameter` centered at the origin of `R^dim`.
    pub fn centered(dim: usize, diameter: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), diameter)
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        project_ball(w, &self.center, self.radius())
    }

    pub fn check(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        let distance = (w - &self.center).norm();
        if distance > self.radius() * (1.0 + DOMAIN_SLACK) {
            return Err(Error::DomainViolation {
                distance,
                radius: self.radius(),
            });
        }
        Ok(())
    }
}

/// Unregularized loss families. Squared and logistic are linear-prediction
/// losses `ℓ(⟨x, w⟩; y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLoss {
    /// `⟨w, x⟩`; the label is ignored.
    Linear,
    /// `½ (y − ⟨x, w⟩)²`
    Squared,
    /// `log(1 + exp(−y ⟨x, w⟩))`
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Linear,
    Squared,
    Logistic,
    /// `base + (lambda_f / 2) ‖w‖²`
    Ridge { base: BaseLoss, lambda_f: f64 },
}

impl LossKind {
    pub fn base(&self) -> BaseLoss {
        match *self {
            LossKind::Linear => BaseLoss::Linear,
            LossKind::Squared => BaseLoss::Squared,
            LossKind::Logistic => BaseLoss::Logistic,
            LossKind::Ridge { base, .. } => base,
        }
    }

    pub fn ridge(&self) -> f64 {
        match *self {
            LossKind::Ridge { lambda_f, .. } => lambda_f,
            _ => 0.0,
        }
    }

    pub fn name(&self) -> String {
        let base = match self.base() {
            BaseLoss::Linear => "linear",
            BaseLoss::Squared => "squared",
            BaseLoss::Logistic => "logistic",
        };
        match self {
            LossKind::Ridge { lambda_f, .. } => format!("ridge-{base}({lambda_f})"),
            _ => base.to_string(),
        }
    }
}

fn label(z: &Sample) -> f64 {
    z.y.unwrap_or(0.0)
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl BaseLoss {
    /// Scalar loss at prediction `s`.
    pub fn scalar(&self, s: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Linear => s,
            BaseLoss::Squared => 0.5 * (y - s) * (y - s),
            BaseLoss::Logistic => log1p_exp(-y * s),
        }
    }

    /// `dℓ/ds`.
    pub fn scalar_derivative(&self, s: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Linear => 1.0,
            BaseLoss::Squared => s - y,
            BaseLoss::Logistic => -y * sigmoid(-y * s),
        }
    }

    /// `d²ℓ/ds²`.
    pub fn scalar_second(&self, s: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Linear => 0.0,
            BaseLoss::Squared => 1.0,
            BaseLoss::Logistic => {
                let p = sigmoid(y * s);
                y * y * p * (1.0 - p)
            }
        }
    }

    /// Minimum of the scalar loss over `s ∈ [lo, hi]`.
    fn interval_min(&self, lo: f64, hi: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Linear => lo,
            BaseLoss::Squared => self.scalar(y.clamp(lo, hi), y),
            BaseLoss::Logistic => self.scalar(lo, y).min(self.scalar(hi, y)),
        }
    }

    /// Maximum of the scalar loss over `s ∈ [lo, hi]` (all are convex in s).
    fn interval_max(&self, lo: f64, hi: f64, y: f64) -> f64 {
        self.scalar(lo, y).max(self.scalar(hi, y))
    }
}

/// A loss family on a domain together with its constants, computed from the
/// finite set of samples it will be evaluated on.
#[derive(Debug, Clone)]
pub struct LossModel {
    pub kind: LossKind,
    pub domain: Domain,
    /// `G`: Lipschitz constant of `F(·; z)` over the domain.
    pub lipschitz_g: f64,
    /// `λ`: strong-convexity modulus claimed for the risk `f` (0 if none).
    pub strong_lambda: f64,
    /// `L`: Lipschitz constant of the scalar loss on the reachable margins.
    pub scalar_lipschitz_l: f64,
    /// `σ`: strong-convexity modulus of the scalar loss on the reachable margins.
    pub scalar_strong_sigma: f64,
    /// `X`: bound on `‖x‖`.
    pub feature_bound_x: f64,
    /// Constant added to every loss value so values lie in `[0, G·R]`.
    pub shift: f64,
}

impl LossModel {
    /// Builds the model and derives its constants from `support`, the finite
    /// set of samples the loss will see.
    pub fn new(kind: LossKind, domain: Domain, support: &[Sample]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::param("loss support must be non-empty"));
        }
        if let Some(bad) = support.iter().find(|z| z.dim() != domain.dim()) {
            return Err(Error::LengthMismatch {
                expected: domain.dim(),
                actual: bad.dim(),
            });
        }
        let lambda_f = kind.ridge();
        if lambda_f < 0.0 || !lambda_f.is_finite() {
            return Err(Error::param("ridge coefficient must be nonnegative"));
        }
        let base = kind.base();
        if base != BaseLoss::Linear && support.iter().any(|z| z.y.is_none()) {
            return Err(Error::param("prediction losses need labelled samples"));
        }

        let r = domain.radius();
        let c = &domain.center;
        let x_bound = support.iter().map(|z| z.x.norm()).fold(0.0, f64::max);
        let margin = support
            .iter()
            .map(|z| z.x.dot(c).abs() + r * z.x.norm())
            .fold(0.0, f64::max);
        let y_bound = support.iter().map(|z| label(z).abs()).fold(0.0, f64::max);

        let (l, sigma) = match base {
            BaseLoss::Linear => (1.0, 0.0),
            BaseLoss::Squared => (margin + y_bound, 1.0),
            BaseLoss::Logistic => {
                let l = y_bound / (1.0 + (-margin * y_bound).exp());
                let sigma = support
                    .iter()
                    .map(|z| {
                        let a = margin * label(z).abs();
                        label(z).powi(2) * sigmoid(a) * sigmoid(-a)
                    })
                    .fold(f64::INFINITY, f64::min);
                (l, sigma)
            }
        };
        let mut g = l * x_bound + lambda_f * (c.norm() + r);

        let ridge_min = 0.5 * lambda_f * (c.norm() - r).max(0.0).powi(2);
        let ridge_max = 0.5 * lambda_f * (c.norm() + r).powi(2);
        let (mut lower, mut upper) = (f64::INFINITY, f64::NEG_INFINITY);
        for z in support {
            let mid = z.x.dot(c);
            let half = r * z.x.norm();
            let y = label(z);
            lower = lower.min(base.interval_min(mid - half, mid + half, y));
            upper = upper.max(base.interval_max(mid - half, mid + half, y));
        }
        lower += ridge_min;
        upper += ridge_max;
        let range = upper - lower;
        if range > g * domain.diameter {
            g = range / domain.diameter;
        }

        Ok(Self {
            kind,
            domain,
            lipschitz_g: g,
            strong_lambda: lambda_f,
            scalar_lipschitz_l: l,
            scalar_strong_sigma: sigma,
            feature_bound_x: x_bound,
            shift: -lower,
        })
    }

    /// Loss constants for every sample a chain can emit.
    pub fn for_process(kind: LossKind, domain: Domain, model: &MarkovProcessModel) -> Result<Self> {
        Self::new(kind, domain, model.emissions())
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_strong_lambda(mut self, lambda: f64) -> Self {
        self.strong_lambda = lambda;
        self
    }

    /// Sets `λ` to the modulus the risk provably has: `σ·λ_min(Σ)` plus any
    /// ridge coefficient.
    pub fn with_expected_modulus(mut self, stationary: &StationaryModel) -> Self {
        self.strong_lambda =
            self.scalar_strong_sigma * stationary.lambda_min.max(0.0) + self.kind.ridge();
        self
    }

    pub fn diameter(&self) -> f64 {
        self.domain.diameter
    }

    /// `F(w; z)` without the shift and without the domain check.
    pub fn raw_value(&self, w: &DVector<f64>, z: &Sample) -> f64 {
        let s = z.x.dot(w);
        let base = self.kind.base().scalar(s, label(z));
        base + 0.5 * self.kind.ridge() * w.norm_squared()
    }

    /// `F(w; z) + shift`.
    pub fn loss_value(&self, w: &DVector<f64>, z: &Sample) -> Result<f64> {
        self.domain.check(w)?;
        Ok(self.raw_value(w, z) + self.shift)
    }

    /// Gradient without the domain check.
    pub fn raw_subgradient(&self, w: &DVector<f64>, z: &Sample) -> DVector<f64> {
        let s = z.x.dot(w);
        let d = self.kind.base().scalar_derivative(s, label(z));
        &z.x * d + w * self.kind.ridge()
    }

    pub fn subgradient(&self, w: &DVector<f64>, z: &Sample) -> Result<DVector<f64>> {
        self.domain.check(w)?;
        Ok(self.raw_subgradient(w, z))
    }

    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        self.domain.project(w)
    }

    /// Exact stationary risk `f(w) = Σ_j π_j F(w; emission(j))`, shifted.
    pub fn expected_risk(
        &self,
        stationary: &StationaryModel,
        model: &MarkovProcessModel,
        w: &DVector<f64>,
    ) -> f64 {
        self.weighted_value(stationary.pi.as_slice(), model, w)
    }

    /// `Σ_j weights_j F(w; emission(j)) + shift·Σ weights`.
    pub fn weighted_value(&self, weights: &[f64], model: &MarkovProcessModel, w: &DVector<f64>) -> f64 {
        weights
            .iter()
            .zip(model.emissions())
            .map(|(p, z)| p * (self.raw_value(w, z) + self.shift))
            .sum()
    }

    pub fn expected_risk_gradient(
        &self,
        stationary: &StationaryModel,
        model: &MarkovProcessModel,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        let mut g = DVector::zeros(w.len());
        for (p, z) in stationary.pi.iter().zip(model.emissions()) {
            g += self.raw_subgradient(w, z) * *p;
        }
        g
    }

    /// Exact Hessian of `f`.
    pub fn expected_risk_hessian(
        &self,
        stationary: &StationaryModel,
        model: &MarkovProcessModel,
        w: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let base = self.kind.base();
        if base == BaseLoss::Linear {
            return Err(Error::Unsupported(format!(
                "{} loss has no scalar curvature",
                self.kind.name()
            )));
        }
        let d = w.len();
        let mut h = DMatrix::identity(d, d) * self.kind.ridge();
        for (p, z) in stationary.pi.iter().zip(model.emissions()) {
            let curv = base.scalar_second(z.x.dot(w), label(z));
            h += &z.x * z.x.transpose() * (p * curv);
        }
        Ok(h)
    }
}
