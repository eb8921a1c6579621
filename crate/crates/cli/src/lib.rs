//! Command-line front end: manifests, the `run` and `analyze` commands and
//! their file formats.

pub mod commands;
pub mod error;
pub mod files;
pub mod manifest;

pub use error::{CliError, CliResult};
pub use manifest::{Manifest, ManifestFile};
