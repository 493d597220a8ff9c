use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{MarkovProcessModel, Sample};
use crate::error::{Error, Result};

/// Two-state chain emitting `x = −1` or `x = +1` with rows
/// `(1 − p/2, p/2)` and `(p/2, 1 − p/2)`, started from the uniform law.
///
/// The label is fixed at `y = +1`, so the linear loss sees `⟨w, z⟩` and the
/// prediction losses see the margin `z·w`.
pub fn sticky_process(p: f64) -> Result<MarkovProcessModel> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("sticky switch probability {p} outside (0, 1]")));
    }
    let stay = 1.0 - p / 2.0;
    MarkovProcessModel::new(
        format!("sticky({p})"),
        DMatrix::from_row_slice(2, 2, &[stay, p / 2.0, p / 2.0, stay]),
        vec![
            Sample::new(vec![-1.0], Some(1.0)),
            Sample::new(vec![1.0], Some(1.0)),
        ],
        DVector::from_vec(vec![0.5, 0.5]),
    )
}

/// Independent uniform signs; the same chain as `sticky(1)`.
pub fn iid_uniform() -> Result<MarkovProcessModel> {
    let mut model = sticky_process(1.0)?;
    model.name = "iid-uniform".into();
    Ok(model)
}

/// Three-state chain with two-dimensional features and real labels,
/// started at its stationary law.
pub fn three_state_demo() -> Result<MarkovProcessModel> {
    let transition =
        DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.2, 0.6, 0.2, 0.1, 0.2, 0.7]);
    let emissions = vec![
        Sample::new(vec![1.0, 0.0], Some(1.0)),
        Sample::new(vec![0.0, 1.0], Some(-0.5)),
        Sample::new(vec![0.6, 0.6], Some(0.25)),
    ];
    start_stationary("3state-demo", transition, emissions)
}

/// Lazy chain on `num_states` states, `P = (1 − p)I + (p/m)J`, each state
/// emitting a random feature with `‖x‖ ≤ 1` and a random ±1 label drawn
/// once from `feature_seed`. Starts at the (uniform) stationary law.
///
/// `φ(k) ≤ 2(1 − p)^k (m − 1)/m`, with equality when the emissions are
/// distinct.
pub fn sticky_features(
    p: f64,
    dim: usize,
    num_states: usize,
    feature_seed: u64,
) -> Result<MarkovProcessModel> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("switch probability {p} outside (0, 1]")));
    }
    if dim == 0 || num_states < 2 {
        return Err(Error::param("need dim ≥ 1 and at least two states"));
    }
    let m = num_states;
    let mut transition = DMatrix::from_element(m, m, p / m as f64);
    for i in 0..m {
        transition[(i, i)] += 1.0 - p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
    let emissions = (0..m)
        .map(|_| {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius: f64 = rng.random_range(0.25..1.0);
            if norm > 0.0 {
                x.iter_mut().for_each(|v| *v *= radius / norm);
            }
            let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Sample::new(x, Some(y))
        })
        .collect();
    MarkovProcessModel::new(
        format!("sticky-features({p},{dim},{m},{feature_seed})"),
        transition,
        emissions,
        DVector::from_element(m, 1.0 / m as f64),
    )
}

fn start_stationary(
    name: &str,
    transition: DMatrix<f64>,
    emissions: Vec<Sample>,
) -> Result<MarkovProcessModel> {
    let m = transition.nrows();
    let model = MarkovProcessModel::new(
        name,
        transition,
        emissions,
        DVector::from_element(m, 1.0 / m as f64),
    )?;
    let pi = model.stationary_distribution()?.pi;
    model.with_initial(pi)
}

/// Resolves a builtin alias: `sticky(p)`, `iid-uniform`, `3state-demo` or
/// `sticky-features(p,d,m,seed)`.
pub fn parse_builtin(name: &str) -> Result<MarkovProcessModel> {
    let name = name.trim();
    match name {
        "iid-uniform" => return iid_uniform(),
        "3state-demo" => return three_state_demo(),
        _ => {}
    }
    let (head, args) = name
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(|| Error::Config(format!("unknown process '{name}'")))?;
    let args: Vec<&str> = args.split(',').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{s}' in '{name}'")))
    };
    let int = |s: &str| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|_| Error::Config(format!("bad integer '{s}' in '{name}'")))
    };
    match (head, args.as_slice()) {
        ("sticky", [p]) => sticky_process(num(p)?),
        ("sticky-features", [p, d, m, seed]) => {
            sticky_features(num(p)?, int(d)? as usize, int(m)? as usize, int(seed)?)
        }
        _ => Err(Error::Config(format!("unknown process '{name}'"))),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionDef {
    x: Vec<f64>,
    y: Option<f64>,
}

/// An explicit chain as written in a config file. Omitting `initial` starts
/// the chain at its stationary law.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDefinition {
    #[serde(default)]
    name: Option<String>,
    num_states: usize,
    transition: Vec<Vec<f64>>,
    emissions: Vec<EmissionDef>,
    #[serde(default)]
    initial: Option<Vec<f64>>,
}

impl ProcessDefinition {
    pub fn build(&self) -> Result<MarkovProcessModel> {
        let m = self.num_states;
        if self.transition.len() != m || self.transition.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!(
                "transition must be {m} rows of {m} entries"
            )));
        }
        let flat: Vec<f64> = self.transition.iter().flatten().copied().collect();
        let transition = DMatrix::from_row_slice(m, m, &flat);
        let emissions = self
            .emissions
            .iter()
            .map(|e| Sample::new(e.x.clone(), e.y))
            .collect();
        let name = self.name.clone().unwrap_or_else(|| "custom".into());
        match &self.initial {
            Some(init) => MarkovProcessModel::new(
                name,
                transition,
                emissions,
                DVector::from_vec(init.clone()),
            ),
            None => start_stationary(&name, transition, emissions),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sticky_rejects_out_of_range() {
        assert!(sticky_process(0.0).is_err());
        assert!(sticky_process(1.5).is_err());
        assert!(sticky_process(f64::NAN).is_err());
    }

    #[test]
    fn sticky_one_is_iid() {
        let m = sticky_process(1.0).unwrap();
        assert!(m.transition().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!(parse_builtin("sticky(0.2)").unwrap().num_states(), 2);
        assert_eq!(parse_builtin(" 3state-demo ").unwrap().num_states(), 3);
        assert_eq!(parse_builtin("iid-uniform").unwrap().num_states(), 2);
        let f = parse_builtin("sticky-features(0.2, 3, 6, 4)").unwrap();
        assert_eq!((f.num_states(), f.dim()), (6, 3));
        assert!(parse_builtin("sticky(abc)").is_err());
        assert!(parse_builtin("nope").is_err());
    }

    #[test]
    fn feature_chain_bounded_and_stationary_uniform() {
        let model = sticky_features(0.3, 4, 8, 9).unwrap();
        assert!(model.emissions().iter().all(|s| s.x.norm() <= 1.0 + 1e-15));
        let st = model.stationary_distribution().unwrap();
        assert!(st.pi.iter().all(|&v| (v - 0.125).abs() < 1e-12));
        assert!(st.lambda_min > 0.0);
        let phi = model.phi_coefficient(&st, 2).unwrap();
        assert!((phi - 2.0 * 0.49 * 7.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn definition_from_toml() {
        let text = r#"
            num_states = 2
            transition = [[0.7, 0.3], [0.4, 0.6]]
            emissions = [{ x = [1.0] }, { x = [-1.0], y = 2.0 }]
        "#;
        let def: ProcessDefinition = toml::from_str(text).unwrap();
        let model = def.build().unwrap();
        assert!((model.initial()[0] - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(model.emission(1).y, Some(2.0));

        let bad = "num_states = 1\ntransition = [[1.0]]\nemissions = [{ x = [1.0] }]\nfoo = 1";
        assert!(toml::from_str::<ProcessDefinition>(bad).is_err());
    }
}
