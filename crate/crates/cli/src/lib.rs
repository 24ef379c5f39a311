//! Experiment runner for exponential-family Langevin dynamics: training runs
//! with online bound tracking, sweeps, verification suites and SVG plots.

pub mod aggregate;
pub mod commands;
pub mod config;
pub mod runner;
pub mod svg;
