//! Multitone harmonic balance.

pub mod fourier;
pub mod grid;
pub mod solver;

pub use grid::{build_frequency_grid, FrequencyGrid, GridEntry};
pub use solver::{extract_wave, power_balance, solve_hb, HbOptions, HbProblem, HbSolution};
