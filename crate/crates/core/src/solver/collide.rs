//! Equilibrium and BGK collision (optional Smagorinsky closure and Guo forcing).

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::VelocitySet;

use super::config::SolverConfig;

/// Floating-point lattice constants used in the hot loops.
#[derive(Debug, Clone)]
pub(crate) struct Constants {
    pub dim: usize,
    pub q: usize,
    pub c: Vec<[f64; 3]>,
    pub w: Vec<f64>,
    pub cs2: f64,
}

impl Constants {
    pub fn new(vs: &VelocitySet) -> Self {
        Constants {
            dim: vs.dim(),
            q: vs.q(),
            c: vs
                .velocities()
                .iter()
                .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
                .collect(),
            w: vs.weights_f64(),
            cs2: vs.cs2_f64(),
        }
    }

    /// Second-order Hermite equilibrium for one cell.
    #[inline]
    pub fn equilibrium(&self, rho: f64, u: &[f64; 3], out: &mut [f64]) {
        let inv_cs2 = 1.0 / self.cs2;
        let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        for i in 0..self.q {
            let c = &self.c[i];
            let cu = c[0] * u[0] + c[1] * u[1] + c[2] * u[2];
            out[i] = self.w[i]
                * rho
                * (1.0 + cu * inv_cs2 + 0.5 * cu * cu * inv_cs2 * inv_cs2 - 0.5 * usq * inv_cs2);
        }
    }
}

/// `f_i^eq = w_i ρ [1 + c_i·u/cs² + (c_i·u)²/(2cs⁴) − |u|²/(2cs²)]` on every cell.
///
/// `velocity` holds one slice per spatial component.
pub fn equilibrium(
    vs: &VelocitySet,
    extents: &[usize],
    rho: &[f64],
    velocity: &[Vec<f64>],
) -> Result<DistributionField> {
    let mut f = DistributionField::zeros(vs.model(), extents)?;
    let n = f.cells();
    if rho.len() != n || velocity.len() != vs.dim() || velocity.iter().any(|u| u.len() != n) {
        return Err(Error::shape("density/velocity fields do not match the grid"));
    }
    if rho.iter().chain(velocity.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite density or velocity"));
    }
    let k = Constants::new(vs);
    let mut feq = vec![0.0; k.q];
    let mut u = [0.0; 3];
    let data = f.data_mut();
    for x in 0..n {
        for (a, comp) in velocity.iter().enumerate() {
            u[a] = comp[x];
        }
        k.equilibrium(rho[x], &u, &mut feq);
        for i in 0..k.q {
            data[i * n + x] = feq[i];
        }
    }
    Ok(f)
}

/// Collision parameters resolved from a [`SolverConfig`].
#[derive(Debug, Clone)]
pub(crate) struct CollisionParams {
    pub tau: f64,
    pub smagorinsky_c: Option<f64>,
    pub force: Option<[f64; 3]>,
}

impl CollisionParams {
    pub fn from_config(cfg: &SolverConfig) -> Self {
        let force = cfg.force.as_ref().map(|f| {
            let mut out = [0.0; 3];
            out[..f.len()].copy_from_slice(f);
            out
        });
        CollisionParams {
            tau: cfg.tau,
            smagorinsky_c: cfg.smagorinsky_c.filter(|c| *c > 0.0),
            force,
        }
    }
}

/// Applies one collision in place. `solid[x] == true` cells are skipped.
pub(crate) fn collide_in_place(
    k: &Constants,
    p: &CollisionParams,
    f: &mut DistributionField,
    solid: Option<&[bool]>,
) -> Result<()> {
    let n = f.cells();
    let q = k.q;
    let data = f.data_mut();
    let mut fl = [0.0f64; 27];
    let mut feq = [0.0f64; 27];
    let cs2 = k.cs2;
    for x in 0..n {
        if solid.is_some_and(|s| s[x]) {
            continue;
        }
        let mut rho = 0.0;
        let mut mom = [0.0; 3];
        for i in 0..q {
            let v = data[i * n + x];
            fl[i] = v;
            rho += v;
            let c = &k.c[i];
            mom[0] += v * c[0];
            mom[1] += v * c[1];
            mom[2] += v * c[2];
        }
        if let Some(force) = &p.force {
            for a in 0..3 {
                mom[a] += 0.5 * force[a];
            }
        }
        let u = [mom[0] / rho, mom[1] / rho, mom[2] / rho];
        k.equilibrium(rho, &u, &mut feq);

        let tau_eff = match p.smagorinsky_c {
            None => p.tau,
            Some(cs) => {
                let mut pi = [[0.0f64; 3]; 3];
                for i in 0..q {
                    let neq = fl[i] - feq[i];
                    let c = &k.c[i];
                    for a in 0..k.dim {
                        for b in 0..k.dim {
                            pi[a][b] += c[a] * c[b] * neq;
                        }
                    }
                }
                let norm = pi.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
                0.5 * (p.tau
                    + (p.tau * p.tau
                        + 2.0 * std::f64::consts::SQRT_2 * cs * cs * norm / (rho * cs2 * cs2))
                        .sqrt())
            }
        };
        if !(tau_eff > 0.5) {
            // Flat index; `relocate_stability` converts it to grid coordinates.
            return Err(Error::Stability {
                cell: vec![x],
                tau_eff,
            });
        }
        let omega = 1.0 / tau_eff;
        match &p.force {
            None => {
                for i in 0..q {
                    data[i * n + x] = fl[i] - omega * (fl[i] - feq[i]);
                }
            }
            Some(force) => {
                let pref = 1.0 - 0.5 * omega;
                for i in 0..q {
                    let c = &k.c[i];
                    let cu = c[0] * u[0] + c[1] * u[1] + c[2] * u[2];
                    let mut src = 0.0;
                    for a in 0..3 {
                        src += ((c[a] - u[a]) / cs2 + cu * c[a] / (cs2 * cs2)) * force[a];
                    }
                    data[i * n + x] = fl[i] - omega * (fl[i] - feq[i]) + pref * k.w[i] * src;
                }
            }
        }
    }
    Ok(())
}

/// One collision applied to a copy of `f`.
pub fn collide(f: &DistributionField, cfg: &SolverConfig) -> Result<DistributionField> {
    cfg.validate(f.model())?;
    if !f.is_finite() {
        return Err(Error::numeric("collide: non-finite populations"));
    }
    let vs = crate::lattice::velocity_set(f.model());
    let k = Constants::new(&vs);
    let mut out = f.clone();
    collide_in_place(&k, &CollisionParams::from_config(cfg), &mut out, None).map_err(|e| {
        relocate_stability(e, f)
    })?;
    Ok(out)
}

pub(crate) fn relocate_stability(e: Error, f: &DistributionField) -> Error {
    match e {
        Error::Stability { cell, tau_eff } => {
            let mut coords = vec![0; f.grid().dim()];
            f.grid().coords(cell[0], &mut coords);
            Error::Stability {
                cell: coords,
                tau_eff,
            }
        }
        other => other,
    }
}
