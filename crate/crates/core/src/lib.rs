//! Radar SCNR maximization for MIMO integrated sensing and communication
//! with a fluid-antenna receive array.
//!
//! The transmit precoder and the receive antenna positions are optimized
//! alternately, each block by majorization-minimization:
//!
//! * [`model`]: steering vectors, channels, clutter covariance, SCNR, SINR;
//! * [`precoder`]: concave surrogate in `W`, convexified SINR constraints and
//!   a structured barrier QCQP solver;
//! * [`position`]: per-antenna proximal MM updates with an exact 2-D
//!   projection for the spacing and region constraints;
//! * [`solver`]: the alternating driver and its trace;
//! * [`baselines`]: fixed planar array, rotatable linear array and
//!   grid-restricted position selection;
//! * [`harness`]: scenario generation, sweeps, CSV output.

pub mod baselines;
pub mod checks;
pub mod error;
pub mod harness;
pub mod model;
pub mod position;
pub mod precoder;
pub mod solver;

pub use error::{Error, Result};
