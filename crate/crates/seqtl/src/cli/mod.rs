//! Command-line surface. Each subcommand is a thin wrapper over library
//! calls plus a run manifest; nothing here is needed to use the crate as a
//! library.

mod commands;
pub mod manifest;

pub use commands::{Cli, Command};
pub use manifest::{sha256_file, sha256_hex, RunManifest};

use clap::Parser;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("output parent directory does not exist: {0}")]
    MissingParent(std::path::PathBuf),
    #[error("model was trained on a different schema (model {model}, data {data})")]
    SchemaHashMismatch { model: String, data: String },
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] crate::rnn::ModelError),
    #[error(transparent)]
    Train(#[from] crate::pretrain::TrainError),
    #[error(transparent)]
    Transfer(#[from] crate::transfer::TransferError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Entry point for the `seqtl` binary. Exit code 0 when every requested
/// artifact was written (skipped sweep cells are recorded, not fatal);
/// 2 on any error.
pub fn run() -> ! {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    match commands::dispatch(cli.command) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
