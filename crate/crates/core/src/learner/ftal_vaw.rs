use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::solve_ball_qp;
use crate::loss::{BaseLoss, Domain, LossModel};

/// Follow-the-approximate-leader with the Vovk–Azoury–Warmuth correction for
/// linear-prediction losses `ℓ(⟨x, w⟩; y)`.
///
/// Before playing round `t` the current feature enters the regularizer,
/// `A ← A + x_t x_tᵀ`, and the iterate is
/// `w_t = argmin_{w ∈ W} ⟨z, w⟩ + (σ/2) wᵀ A w` where `z` accumulates
/// `g(i) = ∇F(w_i; ξ_i) − σ x_i x_iᵀ w_i`.
#[derive(Debug, Clone)]
pub struct FtalVawState {
    /// `εI + Σ x_i x_iᵀ` over the features seen so far.
    pub a_eps: DMatrix<f64>,
    pub z_sum: DVector<f64>,
    pub epsilon: f64,
    /// Scalar strong-convexity modulus of the loss.
    pub sigma: f64,
    pub d: usize,
}

#[derive(Debug, Clone)]
pub struct FtalPrediction {
    pub w: DVector<f64>,
    /// `‖x_t‖²` in the dual norm of the updated `A`.
    pub dual_norm_sq: f64,
    pub kkt_residual: f64,
}

impl FtalVawState {
    pub fn new(d: usize, epsilon: f64, sigma: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::NotPositiveDefinite(epsilon));
        }
        if !(sigma > 0.0) {
            return Err(Error::param("FTAL-VAW needs sigma > 0"));
        }
        Ok(Self {
            a_eps: DMatrix::identity(d, d) * epsilon,
            z_sum: DVector::zeros(d),
            epsilon,
            sigma,
            d,
        })
    }

    /// Absorbs `x_t` and returns `w_t`.
    pub fn predict(&mut self, domain: &Domain, x: &DVector<f64>) -> Result<FtalPrediction> {
        self.a_eps += x * x.transpose();
        let q = &self.a_eps * self.sigma;
        let sol = solve_ball_qp(&q, &self.z_sum, &domain.center, domain.radius())?;
        let solved = self
            .a_eps
            .clone()
            .cholesky()
            .ok_or(Error::SingularSystem)?
            .solve(x);
        Ok(FtalPrediction {
            w: sol.w,
            dual_norm_sq: x.dot(&solved),
            kkt_residual: sol.kkt_residual,
        })
    }

    /// Accumulates `g(t)` once the label is revealed.
    pub fn update(&mut self, loss: &LossModel, x: &DVector<f64>, y: f64, w: &DVector<f64>) -> Result<()> {
        let base = prediction_base(loss)?;
        let s = x.dot(w);
        let g = x * (base.scalar_derivative(s, y) - self.sigma * s);
        self.z_sum += g;
        Ok(())
    }

    /// One full round: absorb `x_t`, play `w_t`, accumulate `g(t)`.
    pub fn step(
        &mut self,
        domain: &Domain,
        loss: &LossModel,
        x: &DVector<f64>,
        y: f64,
    ) -> Result<FtalPrediction> {
        let pred = self.predict(domain, x)?;
        self.update(loss, x, y, &pred.w)?;
        Ok(pred)
    }
}

pub(crate) fn prediction_base(loss: &LossModel) -> Result<BaseLoss> {
    match loss.kind.base() {
        b @ (BaseLoss::Squared | BaseLoss::Logistic) if loss.kind.ridge() == 0.0 => Ok(b),
        _ => Err(Error::Unsupported(format!(
            "FTAL-VAW needs a squared or logistic loss, got {}",
            loss.kind.name()
        ))),
    }
}
