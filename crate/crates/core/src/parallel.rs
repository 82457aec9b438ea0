//! Order-preserving map over independent work items, on the rayon pool when
//! the `parallel` feature is enabled and sequentially otherwise.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this build can actually run in parallel.
    pub fn available(self) -> bool {
        match self {
            ExecMode::Sequential => true,
            ExecMode::Parallel => cfg!(feature = "parallel"),
        }
    }
}

/// `items.iter().map(f).collect()`, evaluated on the rayon pool in
/// `Parallel` mode. Output order always matches input order.
pub fn map_ordered<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
