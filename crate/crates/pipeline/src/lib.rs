//! Dataset generation, training, harmonization and evaluation commands.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;
pub mod manifest;
