//! Batch commands and the HTTP service for the `sisd` binary.

pub mod api;
pub mod commands;
pub mod source;
