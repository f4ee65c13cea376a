//! Configuration, persistence and command drivers behind the `solscope` binary.

pub mod commands;
pub mod config;
pub mod io;
