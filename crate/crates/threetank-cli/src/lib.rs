//! Scenario-driven front end for the three-tank benchmark: closed-loop
//! simulation runs, threshold calibration, sensitivity and signature
//! reports, and batch experiments, all exchanged as CSV files.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod runner;
