//! Finite-volume Dean–Kawasaki simulation and density estimation with
//! functional hierarchical tensors over a Haar wavelet basis (FHT-W).
//!
//! The pipeline is:
//!
//! 1. [`fv_sim`] simulates the spatially discretized SDE and produces batches
//!    of simplex-valued cell-mass vectors.
//! 2. [`coords`] maps each sample through the centered log-ratio map and the
//!    Haar cascade into normalized wavelet coordinates.
//! 3. [`ftn`] holds the tree tensor network on the wavelet tree and its
//!    contractions.
//! 4. [`sketch`] builds networks from function queries (interpolation) or
//!    from samples (density estimation).
//! 5. [`observables`] evaluates entropies and correlation matrices under a
//!    fitted density, together with the error metrics.

pub mod coords;
pub mod error;
pub mod ftn;
pub mod fv_sim;
pub mod linalg;
pub mod observables;
pub mod samples;
pub mod sketch;

pub use error::{Error, Result};
pub use samples::SampleMatrix;
