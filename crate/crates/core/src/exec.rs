//! Execution mode for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) the helpers fan work out over the
//! rayon global pool; without it every mode runs sequentially. Results never
//! depend on the mode: maps preserve index order and reductions are done on
//! the collected values.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

impl Mode {
    /// Whether work is actually spread over threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Mode::Parallel
    }
}

/// `(0..len).map(f).collect()`, in parallel when the mode allows it.
pub fn map_range<T, F>(mode: Mode, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<S, T, F>(mode: Mode, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Splits `0..len` into contiguous chunks of at most `chunk` indices and maps
/// each chunk range. Used for long scans where a per-index task is too fine.
pub fn map_chunks<T, F>(mode: Mode, len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    map_range(mode, n_chunks, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(len))
    })
}
