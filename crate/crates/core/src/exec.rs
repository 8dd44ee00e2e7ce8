//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature, [`Exec::Parallel`] maps over rayon's pool.
//! Without it, both variants run sequentially. Every parallel loop in the crate
//! is an indexed map whose per-item work depends only on the index, so the two
//! policies produce bit-identical results.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Serial,
    #[default]
    Parallel,
}

impl Exec {
    /// Maps `f` over `0..n`, preserving order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}
