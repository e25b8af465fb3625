//! Configs, file formats and commands around `acl-core`.

pub mod checkpoint_file;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod tables;
pub mod wav;

pub use error::{LabError, LabResult};
