//! Experiment configuration files.
//!
//! ```toml
//! name = "sticky-logistic"
//! process = "sticky(0.2)"
//! n_train = 10000
//! tau = "auto"
//! n_paths = 200
//! seed = 7
//! theorem = "highprob-convex-phi"
//!
//! [loss]
//! kind = "logistic"
//! diameter = 2.0
//!
//! [algorithm]
//! name = "da-convex"
//!
//! [mixing]
//! kind = "geometric"
//! phi0 = 1.0
//! phi1 = 0.2231435513142097
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bounds::TheoremId;
use crate::error::{Error, Result};
use crate::evaluate::CoverageSpec;
use crate::learner::{Algorithm, LearnerParams};
use crate::loss::{BaseLoss, Domain, LossKind, LossModel};
use crate::process::{parse_builtin, MarkovProcessModel, MixingProfile, ProcessDefinition, StationaryModel};

/// Largest lag tabulated for an exact mixing profile.
pub const EXACT_TABLE_MAX: usize = 1000;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProcessSpec {
    Builtin(String),
    Inline(ProcessDefinition),
}

impl ProcessSpec {
    pub fn build(&self) -> Result<MarkovProcessModel> {
        match self {
            ProcessSpec::Builtin(name) => parse_builtin(name),
            ProcessSpec::Inline(def) => def.build(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Linear,
    Squared,
    Logistic,
    Ridge,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossFamily,
    /// Base loss of a ridge-regularized family.
    #[serde(default)]
    pub base: Option<BaseLoss>,
    #[serde(default)]
    pub lambda_f: Option<f64>,
    #[serde(default = "default_diameter")]
    pub diameter: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Overrides the strong-convexity modulus of the risk.
    #[serde(default)]
    pub strong_lambda: Option<f64>,
}

fn default_diameter() -> f64 {
    2.0
}

impl LossSpec {
    pub fn kind(&self) -> Result<LossKind> {
        let no_ridge = |kind: LossKind| {
            if self.base.is_some() || self.lambda_f.is_some() {
                Err(Error::Config("base and lambda_f apply only to kind = \"ridge\"".into()))
            } else {
                Ok(kind)
            }
        };
        match self.kind {
            LossFamily::Linear => no_ridge(LossKind::Linear),
            LossFamily::Squared => no_ridge(LossKind::Squared),
            LossFamily::Logistic => no_ridge(LossKind::Logistic),
            LossFamily::Ridge => {
                let base = self
                    .base
                    .ok_or_else(|| Error::Config("ridge loss needs a base".into()))?;
                let lambda_f = self
                    .lambda_f
                    .ok_or_else(|| Error::Config("ridge loss needs lambda_f".into()))?;
                if !(lambda_f > 0.0) {
                    return Err(Error::Config("lambda_f must be positive".into()));
                }
                Ok(LossKind::Ridge { base, lambda_f })
            }
        }
    }

    pub fn build(&self, model: &MarkovProcessModel, stationary: &StationaryModel) -> Result<LossModel> {
        let center = match &self.center {
            Some(c) => DVector::from_vec(c.clone()),
            None => DVector::zeros(model.dim()),
        };
        if center.len() != model.dim() {
            return Err(Error::Config(format!(
                "domain center has dimension {} but samples have {}",
                center.len(),
                model.dim()
            )));
        }
        let domain = Domain::new(center, self.diameter)?;
        let loss = LossModel::for_process(self.kind()?, domain, model)?.with_expected_modulus(stationary);
        Ok(match self.strong_lambda {
            Some(l) => loss.with_strong_lambda(l),
            None => loss,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingSpecKind {
    /// Exact coefficients of the chain, tabulated.
    Exact,
    Geometric,
    GeometricBeta,
    Algebraic,
    Tabulated,
    Iid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSpec {
    pub kind: MixingSpecKind,
    #[serde(default)]
    pub phi0: Option<f64>,
    #[serde(default)]
    pub phi1: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub k_max: Option<usize>,
}

impl Default for MixingSpec {
    fn default() -> Self {
        Self {
            kind: MixingSpecKind::Exact,
            phi0: None,
            phi1: None,
            s: None,
            theta: None,
            phi: None,
            beta: None,
            k_max: None,
        }
    }
}

impl MixingSpec {
    pub fn build(&self, model: &MarkovProcessModel, stationary: &StationaryModel, n: usize) -> Result<MixingProfile> {
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| Error::Config(format!("mixing kind needs '{field}'")))
        };
        match self.kind {
            MixingSpecKind::Exact => {
                let k_max = self.k_max.unwrap_or(n.min(EXACT_TABLE_MAX)).max(1);
                MixingProfile::exact(model, stationary, k_max)
            }
            MixingSpecKind::Geometric => MixingProfile::geometric(
                need(self.phi0, "phi0")?,
                need(self.phi1, "phi1")?,
                self.s.unwrap_or(1.0),
            ),
            MixingSpecKind::GeometricBeta => MixingProfile::geometric_beta(
                need(self.phi0, "phi0")?,
                need(self.phi1, "phi1")?,
                self.s.unwrap_or(1.0),
            ),
            MixingSpecKind::Algebraic => {
                MixingProfile::algebraic(need(self.phi0, "phi0")?, need(self.theta, "theta")?)
            }
            MixingSpecKind::Tabulated => {
                let phi = self
                    .phi
                    .clone()
                    .ok_or_else(|| Error::Config("tabulated mixing needs 'phi'".into()))?;
                let beta = self.beta.clone().unwrap_or_else(|| phi.clone());
                MixingProfile::tabulated(phi, beta)
            }
            MixingSpecKind::Iid => Ok(MixingProfile::iid()),
        }
    }
}

/// A lag given as a number or as `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauSetting {
    #[default]
    Auto,
    Fixed(usize),
}

impl<'de> Deserialize<'de> for TauSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(TauSetting::Fixed(t)),
            Raw::Text(s) if s == "auto" => Ok(TauSetting::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "tau must be \"auto\" or a positive integer, got '{s}'"
            ))),
        }
    }
}

impl TauSetting {
    pub fn fixed(&self) -> Option<usize> {
        match self {
            TauSetting::Auto => None,
            TauSetting::Fixed(t) => Some(*t),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub process: ProcessSpec,
    pub loss: LossSpec,
    pub algorithm: AlgorithmSpec,
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub tau: TauSetting,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_theorem")]
    pub theorem: TheoremId,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_test")]
    pub k_test: usize,
    #[serde(default)]
    pub mixing: MixingSpec,
}

fn default_delta() -> f64 {
    0.1
}
fn default_paths() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_theorem() -> TheoremId {
    TheoremId::HighprobConvexPhi
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_k_test() -> usize {
    1
}

/// Everything a run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub model: MarkovProcessModel,
    pub stationary: StationaryModel,
    pub loss: LossModel,
    pub algorithm: Algorithm,
    pub params: LearnerParams,
    pub mixing: MixingProfile,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.n_train < 1 {
            return bad("n_train must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.delta));
        }
        if self.tau == TauSetting::Fixed(0) || self.tau.fixed().is_some_and(|t| t > self.n_train) {
            return bad(format!("tau must lie in [1, n_train], got {:?}", self.tau));
        }
        if self.n_paths < 1 {
            return bad("n_paths must be at least 1".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if self.k_test < 1 {
            return bad("k_test must be at least 1".into());
        }
        if !(self.loss.diameter > 0.0) {
            return bad("loss.diameter must be positive".into());
        }
        self.loss.kind()?;
        self.algorithm.name.parse::<Algorithm>()?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let model = self.process.build()?;
        let stationary = model.stationary_distribution()?;
        let loss = self.loss.build(&model, &stationary)?;
        let algorithm: Algorithm = self.algorithm.name.parse()?;
        let params = LearnerParams {
            lambda: self.algorithm.lambda,
            sigma: self.algorithm.sigma,
            epsilon: Some(self.epsilon),
        };
        let mixing = self.mixing.build(&model, &stationary, self.n_train)?;
        Ok(ResolvedExperiment {
            model,
            stationary,
            loss,
            algorithm,
            params,
            mixing,
        })
    }

    /// The coverage run described by this config.
    pub fn coverage_spec(&self, seed: u64, n_paths: usize, workers: Option<usize>) -> Result<CoverageSpec> {
        let r = self.resolve()?;
        Ok(CoverageSpec {
            model: r.model,
            loss: r.loss,
            algorithm: r.algorithm,
            params: r.params,
            n_train: self.n_train,
            theorem: self.theorem,
            delta: self.delta,
            tau: self.tau.fixed(),
            mixing: r.mixing,
            k_test: self.k_test,
            epsilon: self.epsilon,
            n_paths,
            seed,
            workers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
process = "sticky(0.2)"
n_train = 100

[loss]
kind = "logistic"

[algorithm]
name = "da-convex"
"#;

    #[test]
    fn defaults_apply() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.delta, 0.1);
        assert_eq!(cfg.epsilon, 1.0);
        assert_eq!(cfg.tau, TauSetting::Auto);
        assert_eq!(cfg.loss.diameter, 2.0);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.algorithm, Algorithm::DaConvex);
        assert_eq!(r.mixing.phi_table.len(), 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\nsurprise = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("kind = \"logistic\"", "kind = \"logistic\"\nwidth = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("n_train = 100", "n_train = 100\ndelta = 1.5"),
            ("n_train = 100", "n_train = 100\ntau = \"soon\""),
            ("n_train = 100", "n_train = 100\ntau = 0"),
            ("name = \"da-convex\"", "name = \"sgd\""),
            ("kind = \"logistic\"", "kind = \"ridge\""),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(ExperimentConfig::from_toml_str(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn inline_process_and_fixed_tau() {
        let text = r#"
name = "inline"
n_train = 50
tau = 4
[process]
num_states = 2
transition = [[0.9, 0.1], [0.1, 0.9]]
emissions = [{ x = [1.0], y = 1.0 }, { x = [-1.0], y = 1.0 }]
[loss]
kind = "ridge"
base = "squared"
lambda_f = 0.5
[algorithm]
name = "da-strong"
lambda = 1.0
[mixing]
kind = "geometric"
phi0 = 1.0
phi1 = 0.2231435513142097
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.tau, TauSetting::Fixed(4));
        let r = cfg.resolve().unwrap();
        assert_eq!(r.model.num_states(), 2);
        assert!((r.loss.strong_lambda - 1.5).abs() < 1e-12);
    }
}
