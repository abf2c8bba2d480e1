//! Multitone harmonic-balance simulation of kinetic-inductance parametric
//! amplifiers.
//!
//! The crate is layered bottom-up: [`scmat`] holds the superconductor
//! material laws, [`circuit`] the netlist and linear stamping, [`touchstone`]
//! the S-parameter file path, [`hb`] the nonlinear steady-state solver,
//! [`oracle`] a transient reference integrator and [`studio`] the analyses
//! built on top.

pub mod circuit;
pub mod error;
pub mod hb;
pub mod oracle;
pub mod scmat;
pub mod studio;
pub mod touchstone;

pub use circuit::{Circuit, Element, Port, Source, Violation};
pub use error::{Error, Result};
pub use scmat::{KineticInductorParams, NanowireGeometry, SuperconductingFilm};
pub use touchstone::SParamData;
