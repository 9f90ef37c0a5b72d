use serde::{Deserialize, Serialize};

/// How data-parallel inner loops are executed.
///
/// `Parallel` silently degrades to `Sequential` when the crate is built
/// without the `parallel` feature. Both produce bit-identical results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(0..len)` and returns the results in index order.
    pub(crate) fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Applies `f(chunk_index, chunk)` to consecutive `chunk_len` chunks of
    /// `data` and folds the returned values with `f64::max`.
    pub(crate) fn chunks_max<T, F>(self, data: &mut [T], chunk_len: usize, f: F) -> f64
    where
        T: Send,
        F: Fn(usize, &mut [T]) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return data
                .par_chunks_mut(chunk_len)
                .enumerate()
                .map(|(k, chunk)| f(k, chunk))
                .reduce(|| 0.0, f64::max);
        }
        data.chunks_mut(chunk_len)
            .enumerate()
            .map(|(k, chunk)| f(k, chunk))
            .fold(0.0, f64::max)
    }
}
