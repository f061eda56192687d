//! Discrete lattice Boltzmann time stepping.
//!
//! One step is collide-then-stream; stored snapshots are post-stream states.

mod collide;
mod config;
pub mod init;
mod stream;

pub use collide::{collide, equilibrium};
pub use config::{Boundary, Obstacle, SolverConfig};
pub use stream::stream;

use crate::dataset::Provenance;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::{velocity_set, LatticeModel, VelocitySet};

use collide::{relocate_stability, CollisionParams, Constants};
use stream::StreamPlan;

/// Populations larger than this (in magnitude) are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e3;

/// Equally spaced post-stream snapshots of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<DistributionField>,
    /// Absolute step index of each snapshot.
    pub times: Vec<u64>,
    /// Steps between consecutive snapshots.
    pub stride: u64,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Reusable stepper bound to one lattice model, grid and configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    model: LatticeModel,
    extents: Vec<usize>,
    cfg: SolverConfig,
    vs: VelocitySet,
    consts: Constants,
    params: CollisionParams,
    plan: StreamPlan,
    scratch: Vec<f64>,
}

impl Solver {
    pub fn new(model: LatticeModel, extents: &[usize], cfg: SolverConfig) -> Result<Self> {
        cfg.validate(model)?;
        let vs = velocity_set(model);
        let probe = DistributionField::zeros(model, extents)?;
        let plan = StreamPlan::new(&vs, probe.grid(), &cfg)?;
        Ok(Solver {
            model,
            extents: extents.to_vec(),
            consts: Constants::new(&vs),
            params: CollisionParams::from_config(&cfg),
            scratch: vec![0.0; probe.data().len()],
            cfg,
            vs,
            plan,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn velocity_set(&self) -> &VelocitySet {
        &self.vs
    }

    /// Solid-cell mask, if the configuration has an obstacle.
    pub fn solid_mask(&self) -> Option<&[bool]> {
        self.plan.solid()
    }

    fn check_layout(&self, f: &DistributionField) -> Result<()> {
        if f.model() != self.model || f.extents() != self.extents.as_slice() {
            return Err(Error::shape(format!(
                "solver built for {} on {:?}, got {} on {:?}",
                self.model,
                self.extents,
                f.model(),
                f.extents()
            )));
        }
        Ok(())
    }

    /// Initial state for this solver: equilibrium at `(rho, u)` in the fluid,
    /// rest equilibrium inside solids.
    pub fn initial_state(&self, rho: f64, u: &[f64]) -> Result<DistributionField> {
        let n: usize = self.extents.iter().product();
        let dim = self.model.dim();
        let mut vel: Vec<Vec<f64>> = (0..dim).map(|a| vec![u.get(a).copied().unwrap_or(0.0); n]).collect();
        if let Some(mask) = self.plan.solid() {
            for (x, s) in mask.iter().enumerate() {
                if *s {
                    vel.iter_mut().for_each(|c| c[x] = 0.0);
                }
            }
        }
        equilibrium(&self.vs, &self.extents, &vec![rho; n], &vel)
    }

    /// Advances `f` by one collide-then-stream step in place.
    pub fn step_in_place(&mut self, f: &mut DistributionField) -> Result<()> {
        self.check_layout(f)?;
        collide::collide_in_place(&self.consts, &self.params, f, self.plan.solid())
            .map_err(|e| relocate_stability(e, f))?;
        self.plan.apply(f.data(), &mut self.scratch);
        std::mem::swap(f.data_mut_vec(), &mut self.scratch);
        Ok(())
    }

    pub fn step(&mut self, f: &DistributionField) -> Result<DistributionField> {
        let mut out = f.clone();
        self.step_in_place(&mut out)?;
        Ok(out)
    }

    /// Runs `warmup` unrecorded steps, then `steps` steps recording the state
    /// after every `stride`-th one.
    pub fn run(
        &mut self,
        f0: &DistributionField,
        steps: usize,
        stride: usize,
        warmup: usize,
    ) -> Result<Trajectory> {
        if stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        let mut f = f0.clone();
        let mut snapshots = Vec::new();
        let mut times = Vec::new();
        for s in 1..=warmup + steps {
            self.step_in_place(&mut f)?;
            check_divergence(&f, s)?;
            if s > warmup && (s - warmup) % stride == 0 {
                snapshots.push(f.clone());
                times.push(s as u64);
            }
        }
        Ok(Trajectory {
            snapshots,
            times,
            stride: stride as u64,
            provenance: Provenance::default(),
        })
    }
}

fn check_divergence(f: &DistributionField, step: usize) -> Result<()> {
    for v in f.data() {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: "non-finite population".into(),
            });
        }
        if v.abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                step,
                reason: format!("|f| = {} exceeds {DIVERGENCE_THRESHOLD}", v.abs()),
            });
        }
    }
    Ok(())
}

/// `stream(collide(f))` for a one-off step.
pub fn step(f: &DistributionField, cfg: &SolverConfig) -> Result<DistributionField> {
    Solver::new(f.model(), f.extents(), cfg.clone())?.step(f)
}

pub fn run(f0: &DistributionField, cfg: &SolverConfig, steps: usize, stride: usize) -> Result<Trajectory> {
    Solver::new(f0.model(), f0.extents(), cfg.clone())?.run(f0, steps, stride, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments;
    use crate::symmetry::apply_group_action;
    use crate::lattice::symmetry_group;

    #[test]
    fn uniform_equilibrium_is_stationary() {
        let cfg = SolverConfig::periodic(2, 0.7);
        let mut solver = Solver::new(LatticeModel::D2Q9, &[8, 6], cfg).unwrap();
        let f0 = solver.initial_state(1.2, &[0.03, -0.01]).unwrap();
        let traj = solver.run(&f0, 100, 25, 0).unwrap();
        assert_eq!(traj.len(), 4);
        assert_eq!(traj.times, vec![25, 50, 75, 100]);
        for s in &traj.snapshots {
            assert!(s.max_abs_diff(&f0) < 1e-14);
        }
    }

    #[test]
    fn warmup_is_not_recorded() {
        let mut solver = Solver::new(LatticeModel::D2Q9, &[4, 4], SolverConfig::periodic(2, 0.7)).unwrap();
        let f0 = solver.initial_state(1.0, &[0.0, 0.0]).unwrap();
        let traj = solver.run(&f0, 10, 5, 7).unwrap();
        assert_eq!(traj.times, vec![12, 17]);
        assert!(solver.run(&f0, 0, 5, 0).unwrap().is_empty());
        assert!(solver.run(&f0, 5, 0, 0).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let mut solver = Solver::new(LatticeModel::D2Q9, &[4, 4], SolverConfig::periodic(2, 0.7)).unwrap();
        let mut f0 = solver.initial_state(1.0, &[0.0, 0.0]).unwrap();
        f0.set(3, 5, 5e3);
        match solver.run(&f0, 10, 1, 0) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
        f0.set(3, 5, f64::NAN);
        assert!(matches!(solver.run(&f0, 10, 1, 0), Err(Error::Divergence { step: 1, .. })));
    }

    #[test]
    fn wrong_layout_is_rejected() {
        let mut solver = Solver::new(LatticeModel::D2Q9, &[4, 4], SolverConfig::periodic(2, 0.7)).unwrap();
        let f = DistributionField::zeros(LatticeModel::D2Q9, &[4, 5]).unwrap();
        assert!(matches!(solver.step(&f), Err(Error::Shape(_))));
    }

    #[test]
    fn periodic_step_conserves_mass_and_momentum() {
        let f0 = init::random_perturbation(LatticeModel::D2Q9, &[16, 16], 3, 0.05, &[0.02, 0.01]).unwrap();
        let traj = run(&f0, &SolverConfig::periodic(2, 0.6), 200, 200).unwrap();
        let f = &traj.snapshots[0];
        let m0: f64 = moments::density(&f0).iter().sum();
        let m1: f64 = moments::density(f).iter().sum();
        assert!(((m1 - m0) / m0).abs() < 1e-13);
        let p0 = moments::total_momentum(&f0);
        let p1 = moments::total_momentum(f);
        for a in 0..2 {
            assert!(((p1[a] - p0[a]) / p0[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_step_commutes_with_d4_and_oh() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let f = init::random_perturbation(LatticeModel::D2Q9, &[9, 9], 1, 0.1, &[0.02, -0.03]).unwrap();
        let cfg = SolverConfig {
            smagorinsky_c: Some(0.15),
            ..SolverConfig::periodic(2, 0.55)
        };
        let sf = step(&f, &cfg).unwrap();
        for e in g.elements() {
            let lhs = step(&apply_group_action(e, &f).unwrap(), &cfg).unwrap();
            let rhs = apply_group_action(e, &sf).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-15, "{}", e.label());
        }

        let g3 = symmetry_group(LatticeModel::D3Q19);
        let f3 = init::random_perturbation(LatticeModel::D3Q19, &[5, 5, 5], 2, 0.1, &[0.01, 0.02, -0.01]).unwrap();
        let cfg3 = SolverConfig::periodic(3, 0.7);
        let sf3 = step(&f3, &cfg3).unwrap();
        for e in g3.elements() {
            let lhs = step(&apply_group_action(e, &f3).unwrap(), &cfg3).unwrap();
            let rhs = apply_group_action(e, &sf3).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-15, "{}", e.label());
        }
    }

    #[test]
    fn walled_channel_flow_stays_bounded() {
        let cfg = SolverConfig {
            force: Some(vec![1e-6, 0.0]),
            boundaries: vec![[Boundary::Periodic, Boundary::Periodic], [Boundary::Noslip, Boundary::Noslip]],
            ..SolverConfig::periodic(2, 0.8)
        };
        let mut solver = Solver::new(LatticeModel::D2Q9, &[4, 16], cfg.clone()).unwrap();
        let f0 = solver.initial_state(1.0, &[0.0, 0.0]).unwrap();
        let traj = solver.run(&f0, 4000, 4000, 0).unwrap();
        let u = moments::velocity(&traj.snapshots[0]);
        // Poiseuille profile: u_max = F H^2 / (8 rho nu) with H = 16 between half-way walls.
        let nu = cfg.viscosity();
        let expect = 1e-6 * 256.0 / (8.0 * nu);
        let centre = u[0][traj.snapshots[0].grid().index(&[0, 8])];
        assert!((centre - expect).abs() / expect < 0.05, "centre {centre} expect {expect}");
    }
}
