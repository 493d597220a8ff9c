use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MarkovProcessModel, Sample};
use crate::error::{Error, Result};

/// One realized trajectory: `n_train` training samples followed by
/// `n_test` continuation samples.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub seed: u64,
    pub path_index: u64,
    pub states: Vec<usize>,
    pub samples: Vec<Sample>,
    pub n_train: usize,
    pub n_test: usize,
}

impl SamplePath {
    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.n_train]
    }

    pub fn test(&self) -> &[Sample] {
        &self.samples[self.n_train..]
    }

    /// State at the last training step.
    pub fn final_train_state(&self) -> usize {
        self.states[self.n_train - 1]
    }
}

/// The RNG for path `path_index` under `seed`. Each path owns its stream, so
/// paths can be drawn in any order or in parallel.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

pub(crate) fn draw_index<R: Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

impl MarkovProcessModel {
    pub fn sample_path(&self, n_train: usize, n_test: usize, seed: u64) -> Result<SamplePath> {
        self.sample_path_indexed(n_train, n_test, seed, 0)
    }

    pub fn sample_path_indexed(
        &self,
        n_train: usize,
        n_test: usize,
        seed: u64,
        path_index: u64,
    ) -> Result<SamplePath> {
        if n_train < 1 {
            return Err(Error::param("n_train must be at least 1"));
        }
        let mut rng = path_rng(seed, path_index);
        let total = n_train + n_test;
        let mut states = Vec::with_capacity(total);
        let mut state = draw_index(&mut rng, self.initial().iter().copied());
        states.push(state);
        for _ in 1..total {
            state = self.step(state, &mut rng);
            states.push(state);
        }
        let samples = states.iter().map(|&s| self.emission(s).clone()).collect();
        Ok(SamplePath {
            seed,
            path_index,
            states,
            samples,
            n_train,
            n_test,
        })
    }

    /// One transition from `state`.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        draw_index(rng, self.transition().row(state).iter().copied())
    }

    /// States visited in `len` steps after `state` (excluding `state`).
    pub fn continue_from<R: Rng + ?Sized>(&self, state: usize, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut s = state;
        for _ in 0..len {
            s = self.step(s, rng);
            out.push(s);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sticky_process;
    use nalgebra::DMatrix;

    #[test]
    fn same_seed_same_path() {
        let m = sticky_process(0.2).unwrap();
        let a = m.sample_path(5, 3, 7).unwrap();
        let b = m.sample_path(5, 3, 7).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.states.len(), 8);
        assert_eq!((a.train().len(), a.test().len()), (5, 3));
        let c = m.sample_path_indexed(5, 3, 7, 1).unwrap();
        let d = m.sample_path_indexed(200, 0, 7, 2).unwrap();
        assert_ne!(c.states.len(), d.states.len());
    }

    #[test]
    fn absorbing_chain_gives_constant_path() {
        let m = MarkovProcessModel::new(
            "frozen",
            DMatrix::identity(2, 2),
            vec![Sample::new(vec![-1.0], Some(1.0)), Sample::new(vec![1.0], Some(1.0))],
            nalgebra::DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let path = m.sample_path(100, 0, 3).unwrap();
        assert!(path.states.iter().all(|&s| s == 0));
    }

    #[test]
    fn iid_frequency_concentrates() {
        let m = sticky_process(1.0).unwrap();
        let n = 100_000;
        let path = m.sample_path(n, 0, 11).unwrap();
        let freq = path.states.iter().filter(|&&s| s == 0).count() as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn rejects_empty_training() {
        assert!(sticky_process(0.5).unwrap().sample_path(0, 3, 1).is_err());
    }
}
