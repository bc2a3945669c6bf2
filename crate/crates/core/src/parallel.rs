//! Deterministic data-parallel helpers.
//!
//! Work is split into fixed chunks whose results are collected in chunk order
//! and reduced sequentially, so the output never depends on how many threads
//! ran the chunks. Without the `parallel` feature every entry point runs on the
//! calling thread and produces the same bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How chunked work is dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's current pool when the `parallel` feature is on, otherwise sequential.
    #[default]
    Parallel,
}

/// True when the crate was built with rayon support.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Evaluates `f` for chunk indices `0..n_chunks`, results in index order.
pub fn map_chunks<T, F>(n_chunks: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n_chunks).into_par_iter().map(f).collect(),
        _ => (0..n_chunks).map(f).collect(),
    }
}

/// Order-preserving map over a slice.
pub fn map_ordered<I, T, F>(items: &[I], exec: Execution, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f` inside a pool of `workers` threads (`None` keeps the global pool).
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> crate::Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| crate::Error::invalid(format!("cannot build worker pool: {e}")))?;
        return Ok(pool.install(f));
    }
    let _ = workers;
    Ok(f())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
