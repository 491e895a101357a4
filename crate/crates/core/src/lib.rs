//! Two vibrating mirrors coupled through a cavity mode by radiation pressure,
//! including the photon-pair (dynamical Casimir) term.
//!
//! The crate covers the truncated Fock-space model, exact spectra and avoided
//! crossings, second-order effective couplings mediated by virtual photon
//! pairs, and driven-dissipative dynamics in the dressed eigenbasis.

pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod perturbation;
pub mod spectrum;

pub use error::{DynamicsError, HilbertError, ModelError, PerturbationError, SpectrumError};
pub use hilbert::{FockLabel, HilbertSpace, Mode, OperatorMatrix};
pub use model::SystemParams;
pub use num_complex::Complex64 as C64;
