//! Application layer: audio IO, checkpoints, manifests, dataset generation,
//! the evaluation harness, and the `tags2v` command-line interface.

pub mod audio;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod manifest;
