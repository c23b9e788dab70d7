//! Bit-error analysis of a bioFET molecular-communication receiver whose
//! receptors also bind an interfering ligand. Two detectors are compared:
//! a single-sample time-domain threshold and a frequency-domain detector that
//! estimates the information concentration from the binding-noise spectrum.

pub mod channel;
pub mod constants;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kinetics;
pub mod params;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
pub use params::{derive_all, load_config, load_config_file, DerivedParams, SystemConfig};
