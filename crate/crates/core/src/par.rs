//! Data-parallel map/reduce over index ranges.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans out on
//! the rayon pool; without it every call runs sequentially. Reductions used
//! by the crate are associative over integers, so both modes give identical
//! results.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode will actually use more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps every index in `0..n` and folds the results with `reduce`.
pub fn map_reduce<T, M, I, R>(exec: Execution, n: usize, identity: I, map: M, reduce: R) -> T
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
    I: Fn() -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(map).reduce(identity, reduce);
    }
    let _ = exec;
    (0..n).map(map).fold(identity(), reduce)
}

/// Order-preserving parallel map.
pub fn map_collect<T, M>(exec: Execution, n: usize, map: M) -> Vec<T>
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(map).collect();
    }
    let _ = exec;
    (0..n).map(map).collect()
}
