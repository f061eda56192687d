//! Run configuration file: every section is optional and unknown keys are
//! rejected. Command-line flags override file values.

use std::path::Path;

use lbno::neuralop::{LossWeights, OperatorConfig, TrainConfig};
use lbno::scenario::VortexScenario;
use lbno::solver::init;
use lbno::{DistributionField, Error, LatticeModel, Result, Solver, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub scenario: Option<VortexScenario>,
    #[serde(default)]
    pub model: Option<OperatorConfig>,
    #[serde(default)]
    pub training: Option<TrainConfig>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.simulate {
            s.validate()?;
        }
        if let Some(d) = &self.dataset {
            d.validate()?;
        }
        if let Some(m) = &self.model {
            m.validate()?;
        }
        if let Some(t) = &self.training {
            t.validate()?;
        }
        Ok(())
    }
}

/// Initial state of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Equilibrium at uniform `(rho, velocity)`, at rest inside obstacles.
    Uniform { rho: f64, velocity: Vec<f64> },
    TaylorGreen { u0: f64 },
    RandomVortices { u0: f64, max_wavenumber: usize },
    RandomPerturbation { amplitude: f64, mean_velocity: Vec<f64> },
    DoubleShearLayer { u0: f64, thickness: f64, kick: f64 },
}

impl InitialCondition {
    pub fn build(&self, solver: &Solver, model: LatticeModel, extents: &[usize], seed: u64) -> Result<DistributionField> {
        let square = || -> Result<usize> {
            if model != LatticeModel::D2Q9 || extents.len() != 2 || extents[0] != extents[1] {
                return Err(Error::config("this initial condition needs a square D2Q9 grid"));
            }
            Ok(extents[0])
        };
        match self {
            InitialCondition::Uniform { rho, velocity } => solver.initial_state(*rho, velocity),
            InitialCondition::TaylorGreen { u0 } => init::taylor_green(square()?, *u0),
            InitialCondition::RandomVortices { u0, max_wavenumber } => {
                init::random_vortices(extents, seed, *u0, *max_wavenumber)
            }
            InitialCondition::RandomPerturbation {
                amplitude,
                mean_velocity,
            } => init::random_perturbation(model, extents, seed, *amplitude, mean_velocity),
            InitialCondition::DoubleShearLayer { u0, thickness, kick } => {
                init::double_shear_layer(square()?, *u0, *thickness, *kick)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_lattice")]
    pub lattice: LatticeModel,
    pub extents: Vec<usize>,
    pub solver: SolverConfig,
    pub initial: InitialCondition,
    pub steps: usize,
    /// Record every `stride`-th step.
    pub stride: usize,
    #[serde(default)]
    pub warmup: usize,
}

fn default_lattice() -> LatticeModel {
    LatticeModel::D2Q9
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.extents.len() != self.lattice.dim() {
            return Err(Error::config(format!(
                "{} needs {} extents, got {}",
                self.lattice,
                self.lattice.dim(),
                self.extents.len()
            )));
        }
        if self.stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        self.solver.validate(self.lattice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Jump in solver steps; a multiple of the trajectory stride.
    pub jump: u64,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    /// Store payloads as single precision.
    #[serde(default)]
    pub f32: bool,
}

fn default_split() -> (f64, f64, f64) {
    lbno::scenario::DESK_SPLIT
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jump == 0 {
            return Err(Error::config("jump must be positive"));
        }
        lbno::dataset::split_sizes(100, self.split).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Rollout length in jumps.
    #[serde(default = "default_rollout_steps")]
    pub rollout_steps: usize,
}

fn default_rollout_steps() -> usize {
    20
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rollout_steps: default_rollout_steps(),
        }
    }
}

/// Loss weights file for `train --weights`.
pub fn load_weights(path: &Path) -> Result<LossWeights> {
    let text = std::fs::read_to_string(path)?;
    let w: LossWeights =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    w.validate()?;
    Ok(w)
}
