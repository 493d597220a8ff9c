use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    ConvexSqrt,
    StronglyConvex,
}

pub(crate) fn check_gradient(g: &DVector<f64>, bound: f64) -> Result<()> {
    let norm = g.norm();
    if norm > bound * (1.0 + 1e-6) {
        return Err(Error::GradientTooLarge { norm, bound });
    }
    Ok(())
}

/// Dual averaging over a ball.
///
/// * convex-sqrt: `w(t+1) = Π(c − S_t / (scale·√t))` with
///   `S_t = Σ_{i≤t} g_i` and `scale = 1.5·G/R`, which keeps
///   `‖w(t) − w(t+1)‖ ≤ R/√t`.
/// * strongly convex: `w(t+1) = Π((1/t) Σ_{i≤t} (w(i) − g_i/λ))`, the
///   minimizer over the ball of the accumulated λ-strongly convex linear
///   models `⟨g_i, w⟩ + (λ/2)‖w − w(i)‖²`, which keeps
///   `‖w(t) − w(t+1)‖ ≤ G/(λt)`.
#[derive(Debug, Clone)]
pub struct DualAveragingState {
    pub grad_sum: DVector<f64>,
    /// `Σ_{i≤t} w(i)`, used by the strongly convex mode.
    pub iterate_sum: DVector<f64>,
    pub t: usize,
    pub mode: StepMode,
    pub lambda: f64,
    pub scale: f64,
    pub gradient_bound: f64,
    /// The iterate to be played next.
    pub w: DVector<f64>,
}

impl DualAveragingState {
    pub fn convex(domain: &Domain, lipschitz_g: f64) -> Self {
        let scale = 1.5 * lipschitz_g / domain.diameter;
        Self::with_mode(domain, StepMode::ConvexSqrt, 0.0, scale, lipschitz_g)
    }

    pub fn strongly_convex(domain: &Domain, lipschitz_g: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::param("strongly convex mode needs lambda > 0"));
        }
        Ok(Self::with_mode(domain, StepMode::StronglyConvex, lambda, lambda, lipschitz_g))
    }

    fn with_mode(domain: &Domain, mode: StepMode, lambda: f64, scale: f64, g: f64) -> Self {
        let d = domain.dim();
        Self {
            grad_sum: DVector::zeros(d),
            iterate_sum: DVector::zeros(d),
            t: 0,
            mode,
            lambda,
            scale,
            gradient_bound: g,
            w: domain.center.clone(),
        }
    }

    /// Feeds the gradient at the current iterate and returns the next one.
    pub fn step(&mut self, domain: &Domain, g: &DVector<f64>) -> Result<DVector<f64>> {
        check_gradient(g, self.gradient_bound)?;
        self.t += 1;
        let t = self.t as f64;
        self.grad_sum += g;
        self.iterate_sum += &self.w;
        let target = match self.mode {
            StepMode::ConvexSqrt => {
                if self.scale > 0.0 {
                    &domain.center - &self.grad_sum / (self.scale * t.sqrt())
                } else {
                    domain.center.clone()
                }
            }
            StepMode::StronglyConvex => (&self.iterate_sum - &self.grad_sum / self.lambda) / t,
        };
        self.w = domain.project(&target);
        Ok(self.w.clone())
    }

    /// Per-step bound on `‖w(t) − w(t+1)‖`.
    pub fn stability_envelope(&self, t: usize, diameter: f64) -> f64 {
        match self.mode {
            StepMode::ConvexSqrt => diameter / (t as f64).sqrt(),
            StepMode::StronglyConvex => self.gradient_bound / (self.lambda * t as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_stay_at_center() {
        let dom = Domain::new(DVector::from_vec(vec![0.3, -0.2]), 2.0).unwrap();
        let mut st = DualAveragingState::convex(&dom, 1.0);
        for _ in 0..20 {
            assert_eq!(st.step(&dom, &DVector::zeros(2)).unwrap(), dom.center);
        }
        let mut sc = DualAveragingState::strongly_convex(&dom, 1.0, 0.5).unwrap();
        for _ in 0..20 {
            assert!((sc.step(&dom, &DVector::zeros(2)).unwrap() - &dom.center).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_walks_to_lower_edge() {
        let dom = Domain::centered(1, 2.0).unwrap();
        let g = DVector::from_vec(vec![1.0]);
        let mut st = DualAveragingState::convex(&dom, 1.0);
        let mut prev = 0.0;
        for _ in 0..50 {
            let w = st.step(&dom, &g).unwrap()[0];
            assert!(w <= prev + 1e-15);
            prev = w;
        }
        assert!((prev + 1.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_gradient_rejected() {
        let dom = Domain::centered(1, 2.0).unwrap();
        let mut st = DualAveragingState::convex(&dom, 1.0);
        assert!(matches!(
            st.step(&dom, &DVector::from_vec(vec![1.1])),
            Err(Error::GradientTooLarge { .. })
        ));
    }
}
