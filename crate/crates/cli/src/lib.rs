//! Experiment runner for the `rankfeedback` model: figures, sweeps and verification suites.

pub mod figures;
pub mod plot;
pub mod sweep;
pub mod table;
pub mod verify;
