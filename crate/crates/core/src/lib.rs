//! Lattice Boltzmann simulation and a symmetry-aware spectral neural operator
//! that learns multi-step jumps of the population field.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod field;
pub mod lattice;
pub mod moments;
pub mod neuralop;
pub mod scenario;
pub mod solver;
pub mod symmetry;
pub mod verify;

pub use dataset::{KineticDataset, KineticSample, Provenance, SplitTag};
pub use error::{Error, Result};
pub use field::{DistributionField, Grid};
pub use lattice::{symmetry_group, velocity_set, LatticeModel, SymmetryElement, SymmetryGroup, VelocitySet};
pub use solver::{Boundary, Obstacle, Solver, SolverConfig, Trajectory};
pub use neuralop::{LossWeights, OperatorConfig, SpectralOperatorModel};
