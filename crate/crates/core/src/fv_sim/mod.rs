//! Finite-volume Euler–Maruyama simulation of the discretized Dean–Kawasaki
//! SDE on the periodic unit interval or square.
//!
//! Cell averages `Π` evolve by explicit upwinded potential fluxes, explicit
//! stochastic face fluxes and an implicit (backward Euler) diffusion solve.
//! Sampled states are reported as cell masses `π = h^n Π`, which lie on the
//! probability simplex.

mod batch;
mod config;
pub mod flux;
mod stepper;

pub use batch::{
    batch_file_name, read_batch_csv, simulate_batch, BatchDiagnostics, BatchManifest, BatchRun,
    TrajectoryBatch,
};
pub use config::{
    ExternalPotential, InitialCondition, PairPotential, PotentialSpec, SimConfig,
};
pub use stepper::{GridState, NoiseStats, Simulator, DIVERGENCE_THRESHOLD};
