use nalgebra::DVector;

use super::dual_averaging::{check_gradient, StepMode};
use crate::error::{Error, Result};
use crate::loss::Domain;

/// Projected online gradient descent, `w(t+1) = Π(w(t) − η_t g_t)` with
/// `η_t = R/(G√t)` (convex) or `η_t = 1/(λt)` (strongly convex).
#[derive(Debug, Clone)]
pub struct OgdState {
    pub t: usize,
    pub mode: StepMode,
    pub lambda: f64,
    pub gradient_bound: f64,
    pub diameter: f64,
    pub w: DVector<f64>,
}

impl OgdState {
    pub fn convex(domain: &Domain, lipschitz_g: f64) -> Self {
        Self {
            t: 0,
            mode: StepMode::ConvexSqrt,
            lambda: 0.0,
            gradient_bound: lipschitz_g,
            diameter: domain.diameter,
            w: domain.center.clone(),
        }
    }

    pub fn strongly_convex(domain: &Domain, lipschitz_g: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::param("strongly convex mode needs lambda > 0"));
        }
        Ok(Self {
            mode: StepMode::StronglyConvex,
            lambda,
            ..Self::convex(domain, lipschitz_g)
        })
    }

    pub fn stepsize(&self, t: usize) -> f64 {
        let t = t as f64;
        match self.mode {
            StepMode::ConvexSqrt if self.gradient_bound > 0.0 => {
                self.diameter / (self.gradient_bound * t.sqrt())
            }
            StepMode::ConvexSqrt => 0.0,
            StepMode::StronglyConvex => 1.0 / (self.lambda * t),
        }
    }

    pub fn step(&mut self, domain: &Domain, g: &DVector<f64>) -> Result<DVector<f64>> {
        check_gradient(g, self.gradient_bound)?;
        self.t += 1;
        let eta = self.stepsize(self.t);
        self.w = domain.project(&(&self.w - g * eta));
        Ok(self.w.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_constant() {
        let dom = Domain::centered(2, 2.0).unwrap();
        let mut st = OgdState::convex(&dom, 1.0);
        for _ in 0..10 {
            assert_eq!(st.step(&dom, &DVector::zeros(2)).unwrap(), dom.center);
        }
    }

    #[test]
    fn strong_step_magnitude() {
        let dom = Domain::centered(1, 10.0).unwrap();
        let mut st = OgdState::strongly_convex(&dom, 2.0, 0.5).unwrap();
        let mut prev = st.w.clone();
        for t in 1..=100 {
            let g = DVector::from_vec(vec![if t % 3 == 0 { 2.0 } else { -1.5 }]);
            let w = st.step(&dom, &g).unwrap();
            assert!((&w - &prev).norm() <= 2.0 / (0.5 * t as f64) + 1e-12);
            prev = w;
        }
    }
}
