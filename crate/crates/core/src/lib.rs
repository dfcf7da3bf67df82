//! Open quantum system dynamics on qubit-network baths: Lindblad evolution,
//! state diagnostics, spectral fingerprints, non-Hermitian measures and
//! parameter inference from the resulting features.

pub mod algebra;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod presets;
pub mod lindblad;
pub mod ml;
pub mod nonhermitian;
pub mod pipeline;
pub mod spectral;
pub mod states;

pub use error::{Error, Result};
