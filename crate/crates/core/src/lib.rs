//! Quantum and semiclassical simulation of the driven, damped Kerr
//! oscillator, with purity as the probe that separates regular from
//! chaotic regimes.
//!
//! Every rate is measured in units of the damping rate and every time in
//! units of its inverse.

pub mod drive;
pub mod error;
pub mod fockspace;
pub mod harness;
pub mod lindblad;
pub mod observables;
pub mod qsd;
pub mod semiclassical;
pub mod sweep;

pub use drive::DriveSpec;
pub use error::{Error, Result};
pub use fockspace::{FockBasis, FockOperator, SystemParams};
pub use lindblad::{DensityMatrix, EvolutionConfig, Integrator};
pub use observables::ObservableRecord;
pub use qsd::{EnsembleConfig, PureState};
