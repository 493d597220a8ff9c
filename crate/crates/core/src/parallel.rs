//! Order-preserving parallel map over run indices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Evaluates `f(0..n)` on `workers` threads (rayon's default when `None`)
/// and returns the results in index order.
pub fn map_indexed<T, F>(workers: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let work = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let one = map_indexed(Some(1), 100, |i| Ok(i * i)).unwrap();
        let many = map_indexed(Some(7), 100, |i| Ok(i * i)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[9], 81);
    }
}
