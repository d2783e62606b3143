//! Command-line front end for training and evaluating 2-D WGANs.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod tables;
