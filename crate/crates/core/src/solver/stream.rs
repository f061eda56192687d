//! Streaming as a precomputed gather, with boundary populations folded in.

use crate::error::{Error, Result};
use crate::field::{DistributionField, Grid};
use crate::lattice::VelocitySet;

use super::collide::Constants;
use super::config::{Boundary, SolverConfig};

/// Pull table for one grid/configuration pair.
///
/// After streaming, `new[k] = source(gather[k])` where indices below
/// `q * cells` address the post-collision populations and the rest address
/// `constants` (inlet equilibria). Outflow cells are then overwritten from
/// their inward neighbour.
#[derive(Debug, Clone)]
pub(crate) struct StreamPlan {
    base: usize,
    gather: Vec<u32>,
    constants: Vec<f64>,
    outflow: Vec<(u32, u32)>,
    solid: Option<Vec<bool>>,
}

impl StreamPlan {
    pub fn new(vs: &VelocitySet, grid: &Grid, cfg: &SolverConfig) -> Result<Self> {
        let dim = grid.dim();
        if dim != vs.dim() || cfg.boundaries.len() != dim {
            return Err(Error::shape("boundary specification does not match grid dimension"));
        }
        let q = vs.q();
        let cells = grid.len();
        let base = q * cells;
        if base + 2 * dim * q >= u32::MAX as usize {
            return Err(Error::shape("grid too large for a 32-bit gather table"));
        }
        let k = Constants::new(vs);

        let solid = cfg.obstacle.as_ref().map(|obs| {
            let mut coords = vec![0; dim];
            (0..cells)
                .map(|x| {
                    grid.coords(x, &mut coords);
                    obs.is_solid(&coords)
                })
                .collect::<Vec<bool>>()
        });
        let is_solid = |x: usize| solid.as_ref().is_some_and(|s| s[x]);

        // One block of q constants per inlet side.
        let mut constants = Vec::new();
        let mut inlet_block = vec![[None; 2]; dim];
        for (a, sides) in cfg.boundaries.iter().enumerate() {
            for (s, b) in sides.iter().enumerate() {
                if let Boundary::Inlet { velocity } = b {
                    let mut u = [0.0; 3];
                    u[..dim].copy_from_slice(velocity);
                    let mut feq = vec![0.0; q];
                    k.equilibrium(1.0, &u, &mut feq);
                    inlet_block[a][s] = Some(base + constants.len());
                    constants.extend(feq);
                }
            }
        }

        let mirror = |i: usize, axes: &[usize]| -> usize {
            let mut c = vs.velocity(i);
            for &a in axes {
                c[a] = -c[a];
            }
            vs.index_of(c).expect("velocity sets are closed under axis reflection")
        };

        let mut gather = vec![0u32; base];
        let mut outflow = Vec::new();
        let mut x_coords = vec![0usize; dim];
        let mut src = vec![0i64; dim];
        for i in 0..q {
            let c = vs.velocity(i);
            for x in 0..cells {
                let dst = i * cells + x;
                if is_solid(x) {
                    gather[dst] = dst as u32;
                    continue;
                }
                grid.coords(x, &mut x_coords);
                let mut outs: Vec<(usize, usize)> = Vec::new();
                for a in 0..dim {
                    let n = grid.extents()[a] as i64;
                    let mut s = x_coords[a] as i64 - c[a] as i64;
                    if s < 0 || s >= n {
                        let side = usize::from(s >= n);
                        if cfg.boundaries[a][side] == Boundary::Periodic {
                            s = s.rem_euclid(n);
                        } else {
                            outs.push((a, side));
                        }
                    }
                    src[a] = s;
                }
                let bounce = (vs.opposite(i) * cells + x) as u32;
                let kinds: Vec<&Boundary> = outs.iter().map(|&(a, s)| &cfg.boundaries[a][s]).collect();

                let entry = if outs.is_empty() {
                    let s = to_index(grid, &src);
                    if is_solid(s) {
                        bounce
                    } else {
                        (i * cells + s) as u32
                    }
                } else if kinds.iter().any(|b| **b == Boundary::Noslip) {
                    bounce
                } else if let Some(pos) = kinds.iter().position(|b| matches!(b, Boundary::Inlet { .. })) {
                    let (a, s) = outs[pos];
                    (inlet_block[a][s].expect("inlet block registered") + i) as u32
                } else if let Some(pos) = kinds.iter().position(|b| **b == Boundary::Outflow) {
                    let (a, side) = outs[pos];
                    let mut nb = x_coords.clone();
                    if side == 0 {
                        nb[a] = (nb[a] + 1).min(grid.extents()[a] - 1);
                    } else {
                        nb[a] = nb[a].saturating_sub(1);
                    }
                    outflow.push((dst as u32, (i * cells + grid.index(&nb)) as u32));
                    dst as u32
                } else {
                    // Free-slip on every crossed side: reflect the crossed components.
                    let axes: Vec<usize> = outs.iter().map(|&(a, _)| a).collect();
                    for &a in &axes {
                        src[a] = x_coords[a] as i64;
                    }
                    let j = mirror(i, &axes);
                    let s = to_index(grid, &src);
                    if is_solid(s) {
                        bounce
                    } else {
                        (j * cells + s) as u32
                    }
                };
                gather[dst] = entry;
            }
        }
        Ok(StreamPlan {
            base,
            gather,
            constants,
            outflow,
            solid,
        })
    }

    pub fn solid(&self) -> Option<&[bool]> {
        self.solid.as_deref()
    }

    pub fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let base = self.base;
        for (d, &g) in dst.iter_mut().zip(&self.gather) {
            let g = g as usize;
            *d = if g < base { src[g] } else { self.constants[g - base] };
        }
        for &(d, s) in &self.outflow {
            dst[d as usize] = dst[s as usize];
        }
    }
}

fn to_index(grid: &Grid, coords: &[i64]) -> usize {
    coords
        .iter()
        .zip(grid.strides())
        .map(|(&c, &s)| c as usize * s)
        .sum()
}

/// One streaming step applied to a copy of `f`.
pub fn stream(f: &DistributionField, cfg: &SolverConfig) -> Result<DistributionField> {
    cfg.validate(f.model())?;
    let vs = crate::lattice::velocity_set(f.model());
    let plan = StreamPlan::new(&vs, f.grid(), cfg)?;
    let mut out = f.clone();
    plan.apply(f.data(), out.data_mut());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{velocity_set, LatticeModel};

    #[test]
    fn periodic_delta_moves_by_velocity() {
        for model in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            let vs = velocity_set(model);
            let ext = vec![5; model.dim()];
            let cfg = SolverConfig::periodic(model.dim(), 0.8);
            for i in 0..vs.q() {
                let mut f = DistributionField::zeros(model, &ext).unwrap();
                let origin = vec![2usize; model.dim()];
                let x = f.grid().index(&origin);
                f.set(i, x, 1.0);
                let out = stream(&f, &cfg).unwrap();
                let c = vs.velocity(i);
                let off: Vec<i64> = (0..model.dim()).map(|a| c[a] as i64).collect();
                let target = f.grid().wrap_offset(&origin, &off);
                assert_eq!(out.get(i, target), 1.0);
                assert_eq!(out.data().iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn periodic_wraps_and_conserves_mass() {
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[4, 3]).unwrap();
        for (k, v) in f.data_mut().iter_mut().enumerate() {
            *v = 1.0 + k as f64 * 0.25;
        }
        let out = stream(&f, &SolverConfig::periodic(2, 0.8)).unwrap();
        assert_eq!(out.data().iter().sum::<f64>(), f.data().iter().sum::<f64>());
        // east-moving population leaving x = 3 reappears at x = 0
        let g = f.grid();
        assert_eq!(out.get(1, g.index(&[0, 1])), f.get(1, g.index(&[3, 1])));
    }

    /// Half-way bounce-back oracle on a 3-cell strip along x with walls on
    /// both ends: a population travelling into a wall returns with the
    /// opposite velocity to the cell it left, after exactly one step.
    #[test]
    fn noslip_reverses_population_at_wall() {
        let vs = velocity_set(LatticeModel::D2Q9);
        let cfg = SolverConfig {
            boundaries: vec![[Boundary::Noslip, Boundary::Noslip], [Boundary::Periodic, Boundary::Periodic]],
            ..SolverConfig::periodic(2, 0.8)
        };
        let east = vs.index_of([1, 0, 0]).unwrap();
        let west = vs.opposite(east);
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[3, 1]).unwrap();
        f.set(east, 2, 1.0);
        let out = stream(&f, &cfg).unwrap();
        let mut expect = DistributionField::zeros(LatticeModel::D2Q9, &[3, 1]).unwrap();
        expect.set(west, 2, 1.0);
        assert_eq!(out, expect);

        // An interior population keeps moving: from cell 0 to cell 1.
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[3, 1]).unwrap();
        f.set(east, 0, 1.0);
        let out = stream(&f, &cfg).unwrap();
        assert_eq!(out.get(east, 1), 1.0);

        // Diagonal into the wall: north-east at x = 2 returns as south-west.
        let ne = vs.index_of([1, 1, 0]).unwrap();
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[3, 1]).unwrap();
        f.set(ne, 2, 1.0);
        let out = stream(&f, &cfg).unwrap();
        assert_eq!(out.get(vs.opposite(ne), 2), 1.0);
    }

    #[test]
    fn freeslip_reflects_normal_component_only() {
        let vs = velocity_set(LatticeModel::D2Q9);
        let cfg = SolverConfig {
            boundaries: vec![[Boundary::Periodic, Boundary::Periodic], [Boundary::Freeslip, Boundary::Freeslip]],
            ..SolverConfig::periodic(2, 0.8)
        };
        let ne = vs.index_of([1, 1, 0]).unwrap();
        let se = vs.index_of([1, -1, 0]).unwrap();
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[4, 3]).unwrap();
        let g = f.grid().clone();
        f.set(ne, g.index(&[1, 2]), 1.0);
        let out = stream(&f, &cfg).unwrap();
        // tangential motion continues (x: 1 -> 2), normal motion is reversed
        assert_eq!(out.get(se, g.index(&[2, 2])), 1.0);
        assert_eq!(out.data().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn inlet_and_outflow_fill_unknowns() {
        let vs = velocity_set(LatticeModel::D2Q9);
        let cfg = SolverConfig {
            boundaries: vec![
                [Boundary::Inlet { velocity: vec![0.05, 0.0] }, Boundary::Outflow],
                [Boundary::Periodic, Boundary::Periodic],
            ],
            ..SolverConfig::periodic(2, 0.8)
        };
        let f = DistributionField::uniform(LatticeModel::D2Q9, &[4, 2], &vs.weights_f64()).unwrap();
        let out = stream(&f, &cfg).unwrap();
        let k = Constants::new(&vs);
        let mut feq = vec![0.0; 9];
        k.equilibrium(1.0, &[0.05, 0.0, 0.0], &mut feq);
        let east = vs.index_of([1, 0, 0]).unwrap();
        let west = vs.opposite(east);
        let g = out.grid().clone();
        assert_eq!(out.get(east, g.index(&[0, 0])), feq[east]);
        assert_eq!(out.get(west, g.index(&[3, 1])), out.get(west, g.index(&[2, 1])));
    }

    #[test]
    fn solid_cells_bounce_back_and_stay_frozen() {
        let vs = velocity_set(LatticeModel::D2Q9);
        let cfg = SolverConfig {
            obstacle: Some(super::super::config::Obstacle::Mask { cells: vec![vec![2, 2]] }),
            ..SolverConfig::periodic(2, 0.8)
        };
        let east = vs.index_of([1, 0, 0]).unwrap();
        let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[5, 5]).unwrap();
        let g = f.grid().clone();
        f.set(east, g.index(&[1, 2]), 1.0);
        f.set(4, g.index(&[2, 2]), 0.5);
        let out = stream(&f, &cfg).unwrap();
        assert_eq!(out.get(vs.opposite(east), g.index(&[1, 2])), 1.0);
        assert_eq!(out.get(4, g.index(&[2, 2])), 0.5);
    }
}
