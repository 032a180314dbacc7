//! Weighted Dirichlet eigenpairs on a dumbbell (two half-spaces joined by a
//! thin tube) and the asymptotic quantities that describe how the
//! eigenfunction leaks through the tube.

pub mod almgren;
pub mod channel_mode;
pub mod cross_section;
pub mod dumbbell;
pub mod elliptic;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod pipeline;
pub mod profiles;
pub mod quad;
pub mod sparse;

pub use error::{Error, Result};
