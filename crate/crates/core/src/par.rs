//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in input order, so callers get the same
//! output whether the `parallel` feature is on or off and regardless of
//! how many worker threads the current rayon pool has.

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` with at most `threads` workers. With the `parallel` feature off
/// this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Whether this build runs the data-parallel paths.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Derives an independent per-task seed from a master seed and a task path.
///
/// SplitMix64 finalizer folded over the path. Every randomized task (fold,
/// repeat, tree, cascade) gets its seed from its logical position, never from
/// scheduling order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix(master ^ 0x9E37_79B9_7F4A_7C15);
    for &p in path {
        state = mix(state.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(mix(p)));
    }
    state
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator used across the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(master: u64, path: &[u64]) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(derive_seed(master, path))
}
