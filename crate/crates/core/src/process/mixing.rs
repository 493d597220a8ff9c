use serde::{Deserialize, Serialize};

use super::{MarkovProcessModel, StationaryModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingKind {
    Geometric,
    Algebraic,
    Tabulated,
    Iid,
}

/// Which coefficient family the parameters bound. A φ profile also bounds β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certifies {
    Phi,
    Beta,
}

/// Upper bounds on the mixing coefficients as a function of the lag.
///
/// * geometric: `c(k) = phi0 · exp(−phi1 · k^s)`
/// * algebraic: `c(k) = phi0 · k^(−theta)`
/// * tabulated: `phi_table[k − 1]`, `beta_table[k − 1]`, the last entry
///   reused past the end of the table
/// * iid: zero at every lag
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub kind: MixingKind,
    pub certifies: Certifies,
    pub phi0: f64,
    pub phi1: f64,
    pub s: f64,
    pub theta: f64,
    pub phi_table: Vec<f64>,
    pub beta_table: Vec<f64>,
}

impl MixingProfile {
    fn parametric(kind: MixingKind, certifies: Certifies, phi0: f64, phi1: f64, s: f64, theta: f64) -> Self {
        Self {
            kind,
            certifies,
            phi0,
            phi1,
            s,
            theta,
            phi_table: Vec::new(),
            beta_table: Vec::new(),
        }
    }

    pub fn iid() -> Self {
        Self::parametric(MixingKind::Iid, Certifies::Phi, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn geometric(phi0: f64, phi1: f64, s: f64) -> Result<Self> {
        if phi0 < 0.0 || phi1 < 0.0 || s < 0.0 {
            return Err(Error::param("geometric mixing constants must be nonnegative"));
        }
        Ok(Self::parametric(MixingKind::Geometric, Certifies::Phi, phi0, phi1, s, 0.0))
    }

    /// Geometric β-mixing: `β(k) ≤ beta0 · exp(−beta1 · k^s)`, no φ claim.
    pub fn geometric_beta(beta0: f64, beta1: f64, s: f64) -> Result<Self> {
        let mut p = Self::geometric(beta0, beta1, s)?;
        p.certifies = Certifies::Beta;
        Ok(p)
    }

    pub fn algebraic(phi0: f64, theta: f64) -> Result<Self> {
        if phi0 < 0.0 || !(theta > 0.0) {
            return Err(Error::param("algebraic mixing needs phi0 ≥ 0 and theta > 0"));
        }
        Ok(Self::parametric(MixingKind::Algebraic, Certifies::Phi, phi0, 0.0, 0.0, theta))
    }

    pub fn tabulated(phi_table: Vec<f64>, beta_table: Vec<f64>) -> Result<Self> {
        if phi_table.is_empty() || phi_table.len() != beta_table.len() {
            return Err(Error::param("phi and beta tables must be non-empty and equally long"));
        }
        let monotone = |t: &[f64]| t.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        if !monotone(&phi_table) || !monotone(&beta_table) {
            return Err(Error::param("mixing tables must be non-increasing"));
        }
        if phi_table.iter().zip(&beta_table).any(|(p, b)| *b > p + 1e-12 || *b < 0.0) {
            return Err(Error::param("tables must satisfy 0 ≤ beta ≤ phi"));
        }
        Ok(Self {
            phi_table,
            beta_table,
            ..Self::parametric(MixingKind::Tabulated, Certifies::Phi, 0.0, 0.0, 0.0, 0.0)
        })
    }

    /// The exact coefficients of a finite chain for lags `1..=k_max`.
    pub fn exact(model: &MarkovProcessModel, stationary: &StationaryModel, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidLag(k_max));
        }
        let table = model.mixing_table(stationary, k_max);
        // clear round-off so the tables are exactly monotone
        let mut phi: Vec<f64> = table.iter().map(|t| t.0).collect();
        let mut beta: Vec<f64> = table.iter().map(|t| t.1).collect();
        for i in 1..phi.len() {
            phi[i] = phi[i].min(phi[i - 1]);
            beta[i] = beta[i].min(beta[i - 1]);
        }
        for (b, p) in beta.iter_mut().zip(&phi) {
            *b = b.min(*p);
        }
        Self::tabulated(phi, beta)
    }

    fn parametric_value(&self, k: usize) -> f64 {
        let k = k as f64;
        match self.kind {
            MixingKind::Geometric => self.phi0 * (-self.phi1 * k.powf(self.s)).exp(),
            MixingKind::Algebraic => self.phi0 * k.powf(-self.theta),
            _ => 0.0,
        }
    }

    fn table_value(table: &[f64], k: usize) -> f64 {
        table[(k - 1).min(table.len() - 1)]
    }

    /// Bound on φ(k); `None` if the profile only certifies β.
    /// Lag 0 gives the trivial bound 2.
    pub fn phi(&self, k: usize) -> Option<f64> {
        if self.certifies == Certifies::Beta {
            return None;
        }
        if k == 0 {
            return Some(2.0);
        }
        Some(match self.kind {
            MixingKind::Iid => 0.0,
            MixingKind::Tabulated => Self::table_value(&self.phi_table, k),
            _ => self.parametric_value(k),
        })
    }

    /// Bound on β(k). Lag 0 gives the trivial bound 2.
    pub fn beta(&self, k: usize) -> f64 {
        if k == 0 {
            return 2.0;
        }
        match self.kind {
            MixingKind::Iid => 0.0,
            MixingKind::Tabulated => Self::table_value(&self.beta_table, k),
            _ => self.parametric_value(k),
        }
    }

    pub fn is_iid(&self) -> bool {
        self.kind == MixingKind::Iid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{sticky_process, three_state_demo};

    #[test]
    fn iid_is_zero() {
        let p = MixingProfile::iid();
        assert_eq!(p.phi(1), Some(0.0));
        assert_eq!(p.beta(1), 0.0);
    }

    #[test]
    fn geometric_matches_sticky_exact() {
        let model = sticky_process(0.2).unwrap();
        let st = model.stationary_distribution().unwrap();
        let g = MixingProfile::geometric(1.0, -(0.8f64).ln(), 1.0).unwrap();
        for k in 1..=40 {
            let exact = model.phi_coefficient(&st, k).unwrap();
            assert!((g.phi(k).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_only_profile_has_no_phi() {
        let b = MixingProfile::geometric_beta(1.0, 0.5, 1.0).unwrap();
        assert_eq!(b.phi(3), None);
        assert!((b.beta(2) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tabulated_extends_with_last_entry() {
        let model = three_state_demo().unwrap();
        let st = model.stationary_distribution().unwrap();
        let t = MixingProfile::exact(&model, &st, 10).unwrap();
        assert_eq!(t.phi(10), t.phi(500));
        assert!(t.beta(4) <= t.phi(4).unwrap());
    }

    #[test]
    fn tables_validated() {
        assert!(MixingProfile::tabulated(vec![0.5, 0.6], vec![0.1, 0.1]).is_err());
        assert!(MixingProfile::tabulated(vec![0.5, 0.4], vec![0.6, 0.1]).is_err());
        assert!(MixingProfile::algebraic(1.0, 0.0).is_err());
    }
}
