use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;

/// Boundary treatment on one side of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Boundary {
    Periodic,
    /// Incoming populations are set to the equilibrium at `(rho = 1, velocity)`.
    Inlet { velocity: Vec<f64> },
    /// Zero-normal-gradient copy from the first interior layer.
    Outflow,
    /// Specular reflection.
    Freeslip,
    /// Half-way bounce-back.
    Noslip,
}

/// Solid geometry embedded in the fluid domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Obstacle {
    /// Disk in 2D; in 3D a cylinder aligned with the last axis.
    /// Cell `i` is centred at coordinate `i`.
    Cylinder { center: Vec<f64>, radius: f64 },
    /// Explicit list of solid cells.
    Mask { cells: Vec<Vec<usize>> },
}

impl Obstacle {
    pub fn is_solid(&self, coords: &[usize]) -> bool {
        match self {
            Obstacle::Cylinder { center, radius } => {
                let r2: f64 = coords
                    .iter()
                    .zip(center)
                    .take(2)
                    .map(|(&c, &x0)| (c as f64 - x0).powi(2))
                    .sum();
                r2 <= radius * radius
            }
            Obstacle::Mask { cells } => cells.iter().any(|c| c.as_slice() == coords),
        }
    }
}

fn periodic_2d() -> Vec<[Boundary; 2]> {
    vec![[Boundary::Periodic, Boundary::Periodic]; 2]
}

/// Physical and numerical parameters of a lattice Boltzmann run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// BGK relaxation time in time steps.
    pub tau: f64,
    /// Smagorinsky constant; `None` means plain BGK.
    #[serde(default)]
    pub smagorinsky_c: Option<f64>,
    /// Constant body force (Guo forcing).
    #[serde(default)]
    pub force: Option<Vec<f64>>,
    /// `(low, high)` boundary per axis.
    #[serde(default = "periodic_2d")]
    pub boundaries: Vec<[Boundary; 2]>,
    #[serde(default)]
    pub obstacle: Option<Obstacle>,
}

impl SolverConfig {
    /// Fully periodic plain-BGK configuration.
    pub fn periodic(dim: usize, tau: f64) -> Self {
        SolverConfig {
            tau,
            smagorinsky_c: None,
            force: None,
            boundaries: vec![[Boundary::Periodic, Boundary::Periodic]; dim],
            obstacle: None,
        }
    }

    /// Kinematic viscosity `cs2 (tau - 1/2)` with `cs2 = 1/3`.
    pub fn viscosity(&self) -> f64 {
        (self.tau - 0.5) / 3.0
    }

    pub fn tau_for_viscosity(nu: f64) -> f64 {
        3.0 * nu + 0.5
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.boundaries
            .iter()
            .all(|s| s[0] == Boundary::Periodic && s[1] == Boundary::Periodic)
    }

    pub fn validate(&self, model: LatticeModel) -> Result<()> {
        let dim = model.dim();
        if !(self.tau.is_finite() && self.tau > 0.5) {
            return Err(Error::config(format!("tau must exceed 0.5, got {}", self.tau)));
        }
        if let Some(c) = self.smagorinsky_c {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::config(format!("smagorinsky_c must be >= 0, got {c}")));
            }
        }
        if let Some(force) = &self.force {
            if force.len() != dim || force.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("force must be {dim} finite components")));
            }
        }
        if self.boundaries.len() != dim {
            return Err(Error::config(format!(
                "expected boundaries for {dim} axes, got {}",
                self.boundaries.len()
            )));
        }
        let cs = (1.0f64 / 3.0).sqrt();
        for (axis, sides) in self.boundaries.iter().enumerate() {
            let periodic = sides.iter().filter(|b| **b == Boundary::Periodic).count();
            if periodic == 1 {
                return Err(Error::config(format!(
                    "axis {axis}: periodic boundaries must be paired"
                )));
            }
            for b in sides {
                if let Boundary::Inlet { velocity } = b {
                    if velocity.len() != dim || velocity.iter().any(|v| !v.is_finite()) {
                        return Err(Error::config(format!("axis {axis}: inlet velocity needs {dim} components")));
                    }
                    let speed = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if speed >= cs {
                        return Err(Error::config(format!(
                            "inlet speed {speed} is not subsonic (cs = {cs:.4})"
                        )));
                    }
                }
            }
        }
        if let Some(Obstacle::Cylinder { center, radius }) = &self.obstacle {
            if center.len() < 2 || !(*radius > 0.0) {
                return Err(Error::config("cylinder needs a 2-component centre and positive radius"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_schema_round_trip() {
        let json = r#"{
            "tau": 0.6,
            "smagorinsky_c": 0.1,
            "boundaries": [
                [{"type": "inlet", "velocity": [0.05, 0.0]}, {"type": "outflow"}],
                [{"type": "freeslip"}, {"type": "freeslip"}]
            ],
            "obstacle": {"type": "cylinder", "center": [16.0, 32.0], "radius": 4.0}
        }"#;
        let cfg: SolverConfig = serde_json::from_str(json).unwrap();
        cfg.validate(LatticeModel::D2Q9).unwrap();
        let again: SolverConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<SolverConfig>(r#"{"tau": 0.6, "omega": 1.0}"#).is_err());
        assert!(SolverConfig::periodic(2, 0.5).validate(LatticeModel::D2Q9).is_err());
        let mut cfg = SolverConfig::periodic(2, 0.8);
        cfg.boundaries[0] = [Boundary::Inlet { velocity: vec![0.7, 0.0] }, Boundary::Outflow];
        assert!(cfg.validate(LatticeModel::D2Q9).is_err());
        let mut cfg = SolverConfig::periodic(2, 0.8);
        cfg.boundaries[1] = [Boundary::Periodic, Boundary::Noslip];
        assert!(cfg.validate(LatticeModel::D2Q9).is_err());
        assert!(SolverConfig::periodic(2, 0.8).validate(LatticeModel::D3Q19).is_err());
    }
}
