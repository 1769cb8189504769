//! Pseudo-spectral simulator for the simplified nematic liquid crystal
//! system in mild (integral) form, together with the harmonic-analysis
//! toolkit used to verify its small-data decay behaviour: dyadic
//! frequency blocks, Besov / time-blockwise norms, heat-extension
//! Carleson norms, localized heat kernels, a flow-map integrator, and
//! campaign harnesses that fit decay exponents and constants.

pub mod error;
pub mod grid;
mod fft;
pub mod field;
pub mod lp;
pub mod spaces;
pub mod heat;
pub mod solver;
pub mod decay;
pub mod trajectory;
pub mod io;
pub mod verify;

pub use error::{CoreError, Result};
pub use field::SpectralField;
pub use grid::Grid;
