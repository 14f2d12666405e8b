//! Library surface of the `sifter` command-line tool, exposed so the test
//! suites can exercise exactly the code the binary runs.

pub mod commands;
pub mod config;
pub mod pipelines;

pub use config::Config;
