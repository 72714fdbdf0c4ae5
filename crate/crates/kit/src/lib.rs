//! Experiment harness for `igo-core`: run configuration, trace and
//! summary files, and the verification suites behind `igo-kit verify`.

pub mod config;
pub mod trace_io;
pub mod verify;

use std::sync::OnceLock;

/// Environment variable bounding the worker threads of `verify`.
pub const THREADS_ENV: &str = "IGO_KIT_THREADS";

/// Shared worker pool, sized by [`THREADS_ENV`] when set to a positive
/// integer and by the number of CPUs otherwise.
pub fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    })
}
