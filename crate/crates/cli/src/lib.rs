//! Library half of the benchmark harness; the binary is a thin wrapper
//! around [`runner`].

pub mod config;
pub mod runner;
