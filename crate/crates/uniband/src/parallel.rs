use rayon::prelude::*;
use uniband_core::DrawExecutor;

use crate::error::AppError;

/// Runs bootstrap draws on the current rayon pool. `collect` on an indexed
/// parallel iterator keeps draw order, so output does not depend on the
/// number of workers.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl DrawExecutor for Rayon {
    fn map_draws<T, F>(&self, draws: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..draws).into_par_iter().map(f).collect()
    }
}

/// Runs `f` inside a pool with `threads` workers (`None`: rayon's default).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, AppError> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build()?;
            Ok(pool.install(f))
        }
    }
}
