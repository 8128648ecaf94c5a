//! Command-line driver and annotation HTTP service for `lexborrow-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;
