//! Named invariant checks over the lattice, symmetry action, solver,
//! spectral transform and gradients, plus the measurement routines they use.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::KineticSample;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::{symmetry_group, velocity_set, LatticeModel, Rational, VelocitySet};
use crate::moments;
use crate::neuralop::{
    batch_loss, data_components, gradients, init_model, total_loss, Activation, LossWeights, Normalizer,
    OperatorConfig, SpectralTransform,
};
use crate::solver::{init, Solver, SolverConfig};
use crate::symmetry::GroupActionPlan;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub struct Check {
    pub name: &'static str,
    run: fn() -> Result<String>,
}

impl Check {
    pub fn run(&self) -> CheckOutcome {
        let start = Instant::now();
        let (passed, detail) = match (self.run)() {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        CheckOutcome {
            name: self.name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn fail(name: &str, detail: impl Into<String>) -> Error {
    Error::Invariant {
        name: name.into(),
        detail: detail.into(),
    }
}

fn ensure(cond: bool, name: &str, detail: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(fail(name, detail()))
    }
}

/// The full battery, cheapest first.
pub fn battery() -> Vec<Check> {
    vec![
        Check {
            name: "lattice.moments",
            run: check_lattice_moments,
        },
        Check {
            name: "lattice.group-exactness",
            run: check_group_exactness,
        },
        Check {
            name: "symmetry.left-action",
            run: check_left_action,
        },
        Check {
            name: "solver.equilibrium-fixed-point",
            run: check_equilibrium_fixed_point,
        },
        Check {
            name: "solver.conservation",
            run: || {
                let (mass, mom) = conservation_drift(&[32, 32], 200, 11)?;
                ensure(mass < 1e-12 && mom < 1e-12, "solver.conservation", || {
                    format!("mass drift {mass:.3e}, momentum drift {mom:.3e}")
                })?;
                Ok(format!("mass {mass:.1e}, momentum {mom:.1e}"))
            },
        },
        Check {
            name: "solver.equivariance",
            run: || {
                let worst = solver_equivariance_error(32, 12)?;
                ensure(worst < 1e-12, "solver.equivariance", || format!("relative residual {worst:.3e}"))?;
                Ok(format!("max relative residual {worst:.1e}"))
            },
        },
        Check {
            name: "spectral.adjoint",
            run: check_spectral_adjoint,
        },
        Check {
            name: "loss.moment-null-space",
            run: || {
                let (mse, mom0, mom1) = null_space_loss(&[8, 8], 5)?;
                ensure(mom0 < 1e-20 && mom1 < 1e-20 && mse > 1e-6, "loss.moment-null-space", || {
                    format!("mse {mse:.3e}, mom0 {mom0:.3e}, mom1 {mom1:.3e}")
                })?;
                Ok(format!("mse {mse:.1e}, mom0 {mom0:.1e}, mom1 {mom1:.1e}"))
            },
        },
        Check {
            name: "neuralop.gradient",
            run: || {
                let cfg = OperatorConfig {
                    lattice: LatticeModel::D2Q9,
                    extents: vec![8, 8],
                    width: 4,
                    layers: 2,
                    modes: 2,
                    activation: Activation::Gelu,
                };
                let worst = gradient_check(&cfg, 20, 3)?;
                ensure(worst < 1e-4, "neuralop.gradient", || format!("relative error {worst:.3e}"))?;
                Ok(format!("max relative error {worst:.1e} over 20 parameters"))
            },
        },
    ]
}

/// Runs every check and stops at the first failure, returned as an
/// [`Error::Invariant`] naming it.
pub fn run_battery(mut report: impl FnMut(&CheckOutcome)) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for check in battery() {
        let o = check.run();
        report(&o);
        if !o.passed {
            return Err(fail(o.name, o.detail));
        }
        out.push(o);
    }
    Ok(out)
}

fn exact_moments(vs: &VelocitySet) -> Result<()> {
    let d = vs.dim();
    let zero = Rational::from_integer(0);
    let name = "lattice.moments";
    let moment = |idx: &[usize]| -> Rational {
        vs.velocities()
            .iter()
            .zip(vs.weights())
            .map(|(c, w)| w * idx.iter().map(|&a| i64::from(c[a])).product::<i64>())
            .sum()
    };
    let delta = |a: usize, b: usize| if a == b { 1 } else { 0 };
    ensure(moment(&[]) == Rational::from_integer(1), name, || format!("{}: weights do not sum to 1", vs.model()))?;
    let cs2 = vs.cs2();
    for a in 0..d {
        ensure(moment(&[a]) == zero, name, || format!("{}: odd first moment", vs.model()))?;
        for b in 0..d {
            ensure(moment(&[a, b]) == cs2 * delta(a, b), name, || {
                format!("{}: second moment ({a},{b})", vs.model())
            })?;
            for c in 0..d {
                ensure(moment(&[a, b, c]) == zero, name, || format!("{}: third moment", vs.model()))?;
                for e in 0..d {
                    let iso = cs2 * cs2 * (delta(a, b) * delta(c, e) + delta(a, c) * delta(b, e) + delta(a, e) * delta(b, c));
                    ensure(moment(&[a, b, c, e]) == iso, name, || {
                        format!("{}: fourth moment ({a},{b},{c},{e}) is not isotropic", vs.model())
                    })?;
                }
            }
        }
    }
    for i in 0..vs.q() {
        let (c, o) = (vs.velocity(i), vs.velocity(vs.opposite(i)));
        ensure((0..3).all(|a| c[a] == -o[a]), name, || format!("{}: opposite of {i}", vs.model()))?;
    }
    Ok(())
}

fn check_lattice_moments() -> Result<String> {
    exact_moments(&velocity_set(LatticeModel::D2Q9))?;
    exact_moments(&velocity_set(LatticeModel::D3Q19))?;
    Ok("D2Q9 and D3Q19 moments exact through fourth order".into())
}

/// Velocity-permutation identities checked in integer arithmetic, group
/// sizes, and closure/identity/inverse/associativity of the tables.
pub fn group_exactness(model: LatticeModel) -> Result<usize> {
    let name = "lattice.group-exactness";
    let vs = velocity_set(model);
    let group = symmetry_group(model);
    let expected = if model.dim() == 2 { 8 } else { 48 };
    ensure(group.len() == expected, name, || format!("{model}: {} elements", group.len()))?;
    for e in group.elements() {
        let r = e.spatial();
        for i in 0..vs.q() {
            let c = vs.velocity(e.perm()[i]);
            let rc: Vec<i32> = (0..3).map(|a| (0..3).map(|b| r[a][b] * c[b]).sum()).collect();
            ensure(rc == vs.velocity(i), name, || format!("{model} {}: R c_sigma({i}) != c_{i}", e.label()))?;
        }
    }
    group.verify_axioms().map_err(|err| fail(name, err.to_string()))?;
    let n = group.len();
    for a in 0..n {
        for b in 0..n {
            let ab = group.compose(a, b);
            let pa = group.element(a).perm();
            let pb = group.element(b).perm();
            let pab = group.element(ab).perm();
            ensure((0..vs.q()).all(|i| pab[i] == pb[pa[i]]), name, || {
                format!("{model}: permutation of {a}*{b} does not compose")
            })?;
        }
    }
    Ok(n)
}

fn check_group_exactness() -> Result<String> {
    let d4 = group_exactness(LatticeModel::D2Q9)?;
    let oh = group_exactness(LatticeModel::D3Q19)?;
    Ok(format!("D4 ({d4}) and Oh ({oh}) exact"))
}

fn random_field(model: LatticeModel, extents: &[usize], seed: u64) -> Result<DistributionField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = DistributionField::zeros(model, extents)?;
    f.data_mut().iter_mut().for_each(|v| *v = rng.gen());
    Ok(f)
}

fn check_left_action() -> Result<String> {
    let group = symmetry_group(LatticeModel::D2Q9);
    let f = random_field(LatticeModel::D2Q9, &[6, 6], 1)?;
    let plans: Vec<GroupActionPlan> = group
        .elements()
        .iter()
        .map(|e| GroupActionPlan::new(e, f.grid()))
        .collect::<Result<_>>()?;
    for a in 0..group.len() {
        for b in 0..group.len() {
            let lhs = plans[group.compose(a, b)].apply(&f)?;
            let rhs = plans[a].apply(&plans[b].apply(&f)?)?;
            ensure(lhs.data() == rhs.data(), "symmetry.left-action", || {
                format!("(ab)f != a(bf) for a={a}, b={b}")
            })?;
        }
    }
    Ok("(ab)·f = a·(b·f) bitwise for all D4 pairs".into())
}

fn check_equilibrium_fixed_point() -> Result<String> {
    let mut solver = Solver::new(LatticeModel::D2Q9, &[8, 8], SolverConfig::periodic(2, 0.7))?;
    let f = solver.initial_state(1.0, &[0.03, -0.01])?;
    let g = solver.step(&f)?;
    let diff = f.max_abs_diff(&g);
    ensure(diff < 1e-15, "solver.equilibrium-fixed-point", || format!("uniform equilibrium moved by {diff:.3e}"))?;
    Ok(format!("max change {diff:.1e}"))
}

/// Relative drift of total mass and the largest momentum component after
/// `steps` periodic steps from a random perturbation.
pub fn conservation_drift(extents: &[usize], steps: usize, seed: u64) -> Result<(f64, f64)> {
    let dim = extents.len();
    let model = if dim == 2 { LatticeModel::D2Q9 } else { LatticeModel::D3Q19 };
    let mean: Vec<f64> = (0..dim).map(|a| 0.02 / (a + 1) as f64).collect();
    let f0 = init::random_perturbation(model, extents, seed, 0.1, &mean)?;
    let mut solver = Solver::new(model, extents, SolverConfig::periodic(dim, 0.8))?;
    let mut f = f0.clone();
    for _ in 0..steps {
        solver.step_in_place(&mut f)?;
    }
    let (m0, m1) = (moments::total_mass(&f0), moments::total_mass(&f));
    let (p0, p1) = (moments::total_momentum(&f0), moments::total_momentum(&f));
    let pscale = p0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mom = p0.iter().zip(&p1).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / pscale;
    Ok(((m1 - m0).abs() / m0, mom))
}

/// Largest `max|step(R·f) − R·step(f)| / max|f|` over the D4 elements on an
/// `n x n` periodic box.
pub fn solver_equivariance_error(n: usize, seed: u64) -> Result<f64> {
    let group = symmetry_group(LatticeModel::D2Q9);
    let f = init::random_perturbation(LatticeModel::D2Q9, &[n, n], seed, 0.2, &[0.03, 0.01])?;
    let mut solver = Solver::new(LatticeModel::D2Q9, &[n, n], SolverConfig::periodic(2, 0.7))?;
    let scale = f.max_abs();
    let stepped = solver.step(&f)?;
    let mut worst = 0.0f64;
    for e in group.elements() {
        let plan = GroupActionPlan::new(e, f.grid())?;
        let lhs = solver.step(&plan.apply(&f)?)?;
        let rhs = plan.apply(&stepped)?;
        worst = worst.max(lhs.max_abs_diff(&rhs) / scale);
    }
    Ok(worst)
}

fn check_spectral_adjoint() -> Result<String> {
    let t = SpectralTransform::new(&[8, 6], 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h: Vec<f64> = (0..t.cells()).map(|_| rng.gen::<f64>() - 0.5).collect();
    let y: Vec<Complex64> = (0..t.len())
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let mut x = vec![Complex64::default(); t.len()];
    t.analysis(&h, &mut x);
    let mut s = vec![0.0; t.cells()];
    t.synthesis(&y, &mut s);
    let lhs: f64 = y.iter().zip(&x).map(|(a, b)| (a * b.conj()).re).sum();
    let rhs: f64 = h.iter().zip(&s).map(|(a, b)| a * b).sum();
    let err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    ensure(err < 1e-12, "spectral.adjoint", || format!("<Fh, y> vs <h, F*y>: {err:.3e}"))?;
    Ok(format!("relative mismatch {err:.1e}"))
}

/// Orthonormal basis of the populations with zero density and momentum.
pub fn moment_null_space(vs: &VelocitySet) -> Vec<Vec<f64>> {
    let q = vs.q();
    let c = vs.velocities_f64();
    let mut rows = vec![vec![1.0; q]];
    for a in 0..vs.dim() {
        rows.push(c.iter().map(|v| v[a]).collect());
    }
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let project_out = |v: &mut Vec<f64>, b: &[f64]| {
        let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    };
    let normalize = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n, v.iter().map(|x| x / n).collect::<Vec<f64>>())
    };
    for r in rows {
        let mut v = r;
        ortho.iter().for_each(|b| project_out(&mut v, b));
        ortho.push(normalize(&v).1);
    }
    for e in 0..q {
        let mut v = vec![0.0; q];
        v[e] = 1.0;
        for b in ortho.iter().chain(basis.iter()) {
            project_out(&mut v, b);
        }
        let (n, u) = normalize(&v);
        if n > 1e-8 {
            basis.push(u);
        }
    }
    basis
}

/// `(mse, mom0, mom1)` between a random D2Q9 field and the same field plus
/// a per-cell random combination of null-space vectors.
pub fn null_space_loss(extents: &[usize], seed: u64) -> Result<(f64, f64, f64)> {
    let vs = velocity_set(LatticeModel::D2Q9);
    let basis = moment_null_space(&vs);
    let target = random_field(LatticeModel::D2Q9, extents, seed)?;
    let mut pred = target.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for x in 0..target.cells() {
        for b in &basis {
            let a = 1e-2 * (rng.gen::<f64>() - 0.5);
            for (i, bi) in b.iter().enumerate() {
                pred.set(i, x, pred.get(i, x) + a * bi);
            }
        }
    }
    let c = data_components(&pred, &target, &vs)?;
    Ok((c.mse, c.mom0, c.mom1))
}

/// Worst relative disagreement between reverse-mode gradients of the full
/// weighted loss and central differences on `count` random parameters.
pub fn gradient_check(cfg: &OperatorConfig, count: usize, seed: u64) -> Result<f64> {
    let vs = velocity_set(cfg.lattice);
    let w = vs.weights_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = |rng: &mut ChaCha8Rng| -> Result<DistributionField> {
        let mut f = DistributionField::zeros(cfg.lattice, &cfg.extents)?;
        for i in 0..vs.q() {
            for x in 0..f.cells() {
                f.set(i, x, w[i] * (1.0 + 0.2 * (rng.gen::<f64>() - 0.5)));
            }
        }
        Ok(f)
    };
    let samples: Vec<KineticSample> = (0..2)
        .map(|k| {
            Ok(KineticSample {
                input: field(&mut rng)?,
                target: field(&mut rng)?,
                t_in: k,
                jump: 1,
            })
        })
        .collect::<Result<_>>()?;
    let group = symmetry_group(cfg.lattice);
    let mut model = init_model(cfg, seed)?;
    let ds = crate::dataset::KineticDataset {
        model: cfg.lattice,
        extents: cfg.extents.clone(),
        jump: 1,
        samples: samples.clone(),
        provenance: Default::default(),
        split: None,
    };
    model.normalizer = Normalizer::fit(&ds, &group)?;
    let weights = LossWeights {
        mse: 1.0,
        mom0: 0.5,
        mom1: 0.5,
        equiv: 0.3,
    };
    let element = Some(1 + rng.gen_range(0..group.len() - 1));
    let batch: Vec<&KineticSample> = samples.iter().collect();
    let (_, grad) = gradients(&model, &batch, &weights, &group, element)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let k = rng.gen_range(0..model.params.len());
        let mut probe = model.clone();
        probe.params[k] += h;
        let up = total_loss(&batch_loss(&probe, &batch, &weights, &group, element)?, &weights);
        probe.params[k] -= 2.0 * h;
        let down = total_loss(&batch_loss(&probe, &batch, &weights, &group, element)?, &weights);
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Measured and analytic kinetic-energy decay rates of a Taylor–Green
/// vortex on an `n x n` box, fitted by least squares on `ln E(t)`.
pub fn taylor_green_decay(n: usize, tau: f64, u0: f64, steps: usize) -> Result<(f64, f64)> {
    let cfg = SolverConfig::periodic(2, tau);
    let nu = cfg.viscosity();
    let k = 2.0 * std::f64::consts::PI / n as f64;
    let analytic = 2.0 * nu * 2.0 * k * k;
    let mut solver = Solver::new(LatticeModel::D2Q9, &[n, n], cfg)?;
    let mut f = init::taylor_green(n, u0)?;
    let energy = |f: &DistributionField| -> f64 {
        let rho = moments::density(f);
        let u = moments::velocity(f);
        (0..f.cells()).map(|x| 0.5 * rho[x] * (u[0][x] * u[0][x] + u[1][x] * u[1][x])).sum()
    };
    let mut ts = vec![0.0];
    let mut ln_e = vec![energy(&f).ln()];
    for s in 1..=steps {
        solver.step_in_place(&mut f)?;
        if s % 10 == 0 {
            ts.push(s as f64);
            ln_e.push(energy(&f).ln());
        }
    }
    let m = ts.len() as f64;
    let (st, se) = (ts.iter().sum::<f64>() / m, ln_e.iter().sum::<f64>() / m);
    let cov: f64 = ts.iter().zip(&ln_e).map(|(t, e)| (t - st) * (e - se)).sum();
    let var: f64 = ts.iter().map(|t| (t - st) * (t - st)).sum();
    Ok((-cov / var, analytic))
}
