//! Configuration, file formats and commands of the `robin-bayes` tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod verify;
