//! CLI and HTTP front ends for `histrel-core`.

pub mod cli;
pub mod server;
