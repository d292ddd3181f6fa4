pub mod instructions;
pub mod mix;
pub mod mock;
pub mod profile;
pub mod sweep;
pub mod synthesize;
pub mod wer;

use anyhow::Context;

pub(crate) fn runtime(jobs: usize) -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(jobs)
        .enable_all()
        .build()
        .context("cannot start async runtime")
}
