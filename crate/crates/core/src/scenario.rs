//! Reproducible desk-scale setups shared by the CLI, tests and benches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, config_hash, KineticDataset, Provenance};
use crate::error::Result;
use crate::lattice::LatticeModel;
use crate::neuralop::{Activation, LossWeights, OperatorConfig, TrainConfig};
use crate::solver::{init, Boundary, Obstacle, Solver, SolverConfig, Trajectory};

/// Decaying random vortices on a periodic box, cut into jump pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VortexScenario {
    pub extents: Vec<usize>,
    pub tau: f64,
    pub u0: f64,
    pub max_wavenumber: usize,
    /// Unrecorded steps before the first snapshot.
    pub warmup: usize,
    pub jump: u64,
    pub train_trajectories: usize,
    /// Recorded steps per training trajectory.
    pub steps_per_trajectory: usize,
    pub rollout_trajectories: usize,
    /// Jumps covered by each rollout trajectory.
    pub rollout_steps: usize,
    pub seed: u64,
}

impl Default for VortexScenario {
    fn default() -> Self {
        VortexScenario {
            extents: vec![64, 64],
            tau: 0.6,
            u0: 0.05,
            max_wavenumber: 4,
            warmup: 200,
            jump: 50,
            train_trajectories: 12,
            steps_per_trajectory: 1000,
            rollout_trajectories: 3,
            rollout_steps: 20,
            seed: 2024,
        }
    }
}

pub struct ScenarioData {
    /// Jump pairs from the training trajectories (split it for train/val/test).
    pub dataset: KineticDataset,
    /// Separate trajectories sampled every `jump` steps, starting at their
    /// first snapshot, for autoregressive evaluation.
    pub rollouts: Vec<Trajectory>,
}

impl VortexScenario {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig::periodic(self.extents.len(), self.tau)
    }

    fn trajectory(&self, seed: u64, steps: usize) -> Result<Trajectory> {
        let f0 = init::random_vortices(&self.extents, seed, self.u0, self.max_wavenumber)?;
        let mut solver = Solver::new(LatticeModel::D2Q9, &self.extents, self.solver_config())?;
        let mut traj = solver.run(&f0, steps, self.jump as usize, self.warmup)?;
        traj.provenance = Provenance {
            config_hash: config_hash(self)?,
            seed: Some(seed),
            note: "random vortices".into(),
        };
        Ok(traj)
    }

    pub fn build(&self) -> Result<ScenarioData> {
        let train_seeds: Vec<u64> = (0..self.train_trajectories as u64).map(|k| self.seed + k).collect();
        let roll_seeds: Vec<u64> = (0..self.rollout_trajectories as u64)
            .map(|k| self.seed + 10_000 + k)
            .collect();
        let train: Vec<Trajectory> = train_seeds
            .par_iter()
            .map(|&s| self.trajectory(s, self.steps_per_trajectory))
            .collect::<Result<_>>()?;
        let rollout_len = (self.rollout_steps + 1) * self.jump as usize;
        let rollouts: Vec<Trajectory> = roll_seeds
            .par_iter()
            .map(|&s| self.trajectory(s, rollout_len))
            .collect::<Result<_>>()?;
        let mut ds = dataset::generate_many(&train, self.jump)?;
        ds.provenance = Provenance {
            config_hash: config_hash(self)?,
            seed: Some(self.seed),
            note: "random vortices".into(),
        };
        Ok(ScenarioData { dataset: ds, rollouts })
    }
}

/// Train/val/test fractions used by the desk experiments.
pub const DESK_SPLIT: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Operator sized for 64x64 desk runs on a few CPU cores: width 12, four
/// blocks, 8 retained modes per axis.
pub fn desk_operator(extents: &[usize]) -> OperatorConfig {
    OperatorConfig {
        lattice: LatticeModel::D2Q9,
        extents: extents.to_vec(),
        width: 12,
        layers: 4,
        modes: 8,
        activation: Activation::Gelu,
    }
}

/// Default optimizer settings (100 epochs, batch 8, Adam 1e-3, cosine) with
/// the given loss weights.
pub fn desk_training(weights: LossWeights, seed: u64) -> TrainConfig {
    TrainConfig {
        weights,
        seed,
        ..TrainConfig::default()
    }
}

/// Channel flow past a cylinder on 64x64: inlet on the left, outflow on the
/// right, free-slip walls, Smagorinsky closure.
pub fn vonkarman_desk() -> SolverConfig {
    SolverConfig {
        tau: 0.52,
        smagorinsky_c: Some(0.1),
        force: None,
        boundaries: vec![
            [
                Boundary::Inlet {
                    velocity: vec![0.05, 0.0],
                },
                Boundary::Outflow,
            ],
            [Boundary::Freeslip, Boundary::Freeslip],
        ],
        obstacle: Some(Obstacle::Cylinder {
            center: vec![16.0, 31.5],
            radius: 4.0,
        }),
    }
}
