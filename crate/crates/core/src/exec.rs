//! Execution policy for the data-parallel loops (Monte Carlo rows, per-query solves, sweep points).
//!
//! With the `parallel` feature (default) the loops run on rayon; without it, or when
//! [`Execution::Sequential`] is requested, they run on the calling thread. Both paths produce
//! bit-identical results because every work item owns its own RNG stream.

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

#[allow(clippy::derivable_impls)]
impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps `f` over `0..n`, preserving order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Calls `f(chunk_index, chunk)` on consecutive `chunk_len`-sized chunks of `data`.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if chunk_len == 0 {
            return;
        }
        match self {
            Execution::Sequential => data
                .chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                data.par_chunks_mut(chunk_len)
                    .enumerate()
                    .for_each(|(i, c)| f(i, c))
            }
        }
    }

    /// Like [`map_indexed`](Self::map_indexed) but limits the worker count. `workers == 0`
    /// means "use the global pool".
    pub fn map_indexed_bounded<T, F>(self, n: usize, workers: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(not(feature = "parallel"))]
        let _ = workers;
        match self {
            Execution::Sequential => self.map_indexed(n, f),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                if workers == 0 {
                    return self.map_indexed(n, f);
                }
                match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                    Ok(pool) => pool.install(|| self.map_indexed(n, f)),
                    Err(err) => {
                        log::warn!("could not build a {workers}-thread pool ({err}); using the global pool");
                        self.map_indexed(n, f)
                    }
                }
            }
        }
    }
}
