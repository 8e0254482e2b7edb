// SPDX-License-Identifier: Apache-2.0

//! Thread-pool executor. Results come back in input order, so parallel runs
//! are bit-identical to sequential ones.

use ipsim_core::train::Executor;
use rayon::prelude::*;

pub const THREADS_VAR: &str = "IPSIM_THREADS";

pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().expect("thread pool");
        Self { pool }
    }

    /// Uses `IPSIM_THREADS` when set to a positive integer, else all cores.
    pub fn from_env() -> Self {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let cap = std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
        Self::new(cap.unwrap_or(cores))
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Executor for Parallel {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipsim_core::train::Sequential;

    #[test]
    fn matches_sequential_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(7);
        assert_eq!(Parallel::new(4).map(&items, &f), Sequential.map(&items, &f));
    }
}
