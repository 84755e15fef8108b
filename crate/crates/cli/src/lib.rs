//! Command implementations behind the `stabsel` binary.

pub mod commands;
pub mod config;
pub mod priors;
pub mod server;

/// Sizes the global rayon pool. `None` leaves rayon's default (one thread
/// per core).
pub fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
