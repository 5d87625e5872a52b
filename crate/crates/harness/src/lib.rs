//! Config-driven experiments for `markov-lsa`: sweeps over horizons,
//! diagnostics reports, TD(λ) selection and VAR fits, all written as CSV.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod sweep;

pub use error::HarnessError;

/// Environment variable holding the worker thread count.
pub const THREADS_VAR: &str = "MLSA_THREADS";

/// Sizes the global worker pool from `MLSA_THREADS`, if set.
pub fn init_threads() -> Result<(), HarnessError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| HarnessError::config(THREADS_VAR, None, format!("not a thread count: `{raw}`")))?;
    // A second initialization in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
