//! Macroscopic observables (density, momentum, velocity) and unit scaling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::velocity_set;

/// Cells with `rho <= VACUUM_EPS` get zero velocity.
pub const VACUUM_EPS: f64 = 1e-12;

/// `ρ(x) = Σ_i f_i(x)`.
pub fn density(f: &DistributionField) -> Vec<f64> {
    let mut rho = vec![0.0; f.cells()];
    for i in 0..f.q() {
        for (r, v) in rho.iter_mut().zip(f.channel(i)) {
            *r += v;
        }
    }
    rho
}

/// `ρu(x) = Σ_i f_i(x) c_i`, one vector per spatial component.
pub fn momentum(f: &DistributionField) -> Vec<Vec<f64>> {
    let vs = velocity_set(f.model());
    let dim = vs.dim();
    let mut out = vec![vec![0.0; f.cells()]; dim];
    for i in 0..f.q() {
        let c = vs.velocity(i);
        for (a, comp) in out.iter_mut().enumerate() {
            match c[a] {
                0 => {}
                1 => comp.iter_mut().zip(f.channel(i)).for_each(|(m, v)| *m += v),
                -1 => comp.iter_mut().zip(f.channel(i)).for_each(|(m, v)| *m -= v),
                k => {
                    let k = k as f64;
                    comp.iter_mut().zip(f.channel(i)).for_each(|(m, v)| *m += k * v)
                }
            }
        }
    }
    out
}

/// `u = ρu / ρ`, zero where `ρ <= VACUUM_EPS`.
pub fn velocity(f: &DistributionField) -> Vec<Vec<f64>> {
    let rho = density(f);
    let mut mom = momentum(f);
    for comp in &mut mom {
        for (m, r) in comp.iter_mut().zip(&rho) {
            *m = if *r > VACUUM_EPS { *m / r } else { 0.0 };
        }
    }
    mom
}

/// Domain-summed momentum.
pub fn total_momentum(f: &DistributionField) -> Vec<f64> {
    momentum(f).iter().map(|c| c.iter().sum()).collect()
}

pub fn total_mass(f: &DistributionField) -> f64 {
    f.data().iter().sum()
}

/// Density, momentum and velocity of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroFields {
    pub extents: Vec<usize>,
    pub rho: Vec<f64>,
    pub momentum: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl MacroFields {
    pub fn from_field(f: &DistributionField) -> Self {
        MacroFields {
            extents: f.extents().to_vec(),
            rho: density(f),
            momentum: momentum(f),
            velocity: velocity(f),
        }
    }

    /// Velocity components concatenated into one vector.
    pub fn velocity_flat(&self) -> Vec<f64> {
        self.velocity.concat()
    }
}

/// Physical size of one lattice spacing, one time step and unit lattice density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    pub dx: f64,
    pub dt: f64,
    pub rho0: f64,
}

impl Default for UnitScale {
    fn default() -> Self {
        UnitScale {
            dx: 1.0,
            dt: 1.0,
            rho0: 1.0,
        }
    }
}

impl UnitScale {
    pub fn new(dx: f64, dt: f64, rho0: f64) -> Result<Self> {
        let s = UnitScale { dx, dt, rho0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.dx, self.dt, self.rho0].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::config(format!("unit scale must be positive: {self:?}")))
        }
    }

    fn factors(&self) -> (f64, f64, f64) {
        let vel = self.dx / self.dt;
        (self.rho0, vel, self.rho0 * vel)
    }
}

fn scale_fields(m: &MacroFields, rho_s: f64, vel_s: f64, mom_s: f64) -> MacroFields {
    MacroFields {
        extents: m.extents.clone(),
        rho: m.rho.iter().map(|v| v * rho_s).collect(),
        momentum: m
            .momentum
            .iter()
            .map(|c| c.iter().map(|v| v * mom_s).collect())
            .collect(),
        velocity: m
            .velocity
            .iter()
            .map(|c| c.iter().map(|v| v * vel_s).collect())
            .collect(),
    }
}

/// Lattice units to physical units.
pub fn to_physical(m: &MacroFields, scale: &UnitScale) -> MacroFields {
    let (r, v, p) = scale.factors();
    scale_fields(m, r, v, p)
}

/// Physical units back to lattice units.
pub fn from_physical(m: &MacroFields, scale: &UnitScale) -> MacroFields {
    let (r, v, p) = scale.factors();
    scale_fields(m, 1.0 / r, 1.0 / v, 1.0 / p)
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportMeta {
    extents: Vec<usize>,
    dtype: String,
    layout: String,
    files: Vec<String>,
}

fn write_f64(path: &Path, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Writes `<stem>.rho.bin`, `<stem>.u.bin` (components back to back) as raw
/// little-endian f64 plus a `<stem>.json` description. Returns the JSON path.
pub fn export_macro(m: &MacroFields, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let rho_name = format!("{stem}.rho.bin");
    let u_name = format!("{stem}.u.bin");
    write_f64(&dir.join(&rho_name), &m.rho)?;
    write_f64(&dir.join(&u_name), &m.velocity_flat())?;
    let meta = ExportMeta {
        extents: m.extents.clone(),
        dtype: "f64-le".into(),
        layout: "row-major, last axis fastest; velocity components stored one after another".into(),
        files: vec![rho_name, u_name],
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    Ok(path)
}
