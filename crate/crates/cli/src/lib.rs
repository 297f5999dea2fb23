//! Pipeline driver for the `patchq` command-line tool: JSON manifests, flat
//! configuration files and the subcommand implementations.

pub mod commands;
pub mod manifest;
pub mod parallel;
pub mod pngio;
pub mod settings;

pub use commands::{Context, Outcome};
pub use manifest::{Entry, Manifest, PatchEntry};
pub use settings::Settings;
