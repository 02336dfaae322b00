//! Experiment driver for greedy kernel estimation: dataset generation,
//! training, evaluation, rate analysis and reproduction presets.

pub mod commands;
pub mod config;
pub mod dataio;
pub mod presets;
