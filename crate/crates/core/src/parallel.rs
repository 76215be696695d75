//! Thread-pool selection for the parallel simulation and sweep loops.

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CROSS_IMPACT_THREADS";

/// Runs `f` on a dedicated pool when [`THREADS_ENV`] is set to a positive
/// integer, on the global rayon pool otherwise.
pub(crate) fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
