//! Library side of the `lstmp` binary: the checkpoint container, the
//! key=value run configuration, and the command implementations.

pub mod checkpoint;
pub mod cli;
mod commands;
pub mod config;
