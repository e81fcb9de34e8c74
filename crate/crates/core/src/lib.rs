//! Rabi–Bloch oscillations in a tunnelling-coupled chain of two-level sites
//! driven by ac and dc fields: time-domain integration, closed-form rotating
//! wave theory, Floquet quasi-energies, observables and spectral line labelling.

pub mod analytics;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod model;
pub mod observables;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{make_initial_state, AmplitudeState, Band, Boundary, ChainParams, GaussianPacket, Mode};
