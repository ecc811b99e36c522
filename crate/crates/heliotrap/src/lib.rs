//! Simulation of gate-defined electron traps on a helium surface read out
//! through a microwave resonator: electrostatics, few-electron equilibria,
//! vibrational modes, and the dispersive response they imprint on the
//! resonator reflection.

pub mod constants;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod modes;
pub mod potential;
pub mod response;

pub use constants::PhysicalConstants;
pub use equilibrium::{ElectronConfiguration, EquilibriumOptions, LoadResult};
pub use error::{Error, Result};
pub use harness::{CycleReport, Map2dResult, Protocol, SweepResult, SweepSpec};
pub use modes::{ModeSpectrum, ResonatorMode, ResonatorModeKind};
pub use potential::{BiasConfig, GridGeometry, PotentialField, UnitPotentialGrid};
pub use response::{FitReport, ReflectionTrace, ResonatorParams};
