//! Initial states built as equilibria of prescribed macroscopic fields.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{DistributionField, Grid};
use crate::lattice::{velocity_set, LatticeModel};

use super::equilibrium;

/// Taylor–Green vortex on an `n x n` periodic box with peak speed `u0`.
///
/// `u = (-u0 cos kx sin ky, u0 sin kx cos ky)` with `k = 2π/n`, and the
/// matching pressure perturbation folded into the density.
pub fn taylor_green(n: usize, u0: f64) -> Result<DistributionField> {
    let vs = velocity_set(LatticeModel::D2Q9);
    let k = 2.0 * PI / n as f64;
    let cells = n * n;
    let mut rho = vec![0.0; cells];
    let mut ux = vec![0.0; cells];
    let mut uy = vec![0.0; cells];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64, j as f64);
            let idx = i * n + j;
            ux[idx] = -u0 * (k * x).cos() * (k * y).sin();
            uy[idx] = u0 * (k * x).sin() * (k * y).cos();
            rho[idx] = 1.0 - 3.0 * u0 * u0 / 4.0 * ((2.0 * k * x).cos() + (2.0 * k * y).cos());
        }
    }
    equilibrium(&vs, &[n, n], &rho, &[ux, uy])
}

/// Equilibrium around a mean flow with uniform random density and velocity
/// perturbations of relative size `amplitude`.
pub fn random_perturbation(
    model: LatticeModel,
    extents: &[usize],
    seed: u64,
    amplitude: f64,
    mean_velocity: &[f64],
) -> Result<DistributionField> {
    let vs = velocity_set(model);
    let grid = Grid::new(extents)?;
    let n = grid.len();
    let dim = model.dim();
    if mean_velocity.len() != dim {
        return Err(Error::config("mean velocity has the wrong number of components"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho: Vec<f64> = (0..n).map(|_| 1.0 + amplitude * (rng.gen::<f64>() - 0.5)).collect();
    let u: Vec<Vec<f64>> = mean_velocity
        .iter()
        .map(|m| (0..n).map(|_| m + 0.1 * amplitude * (rng.gen::<f64>() - 0.5)).collect())
        .collect();
    equilibrium(&vs, extents, &rho, &u)
}

/// Periodic double shear layer: two tanh jets of speed `u0` and width
/// `thickness` with a transverse sinusoidal kick of relative size `kick`.
pub fn double_shear_layer(n: usize, u0: f64, thickness: f64, kick: f64) -> Result<DistributionField> {
    let vs = velocity_set(LatticeModel::D2Q9);
    let nf = n as f64;
    let mut ux = vec![0.0; n * n];
    let mut uy = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let y = j as f64 / nf;
            let x = i as f64 / nf;
            let idx = i * n + j;
            ux[idx] = if y <= 0.5 {
                u0 * ((y - 0.25) * nf / thickness).tanh()
            } else {
                u0 * ((0.75 - y) * nf / thickness).tanh()
            };
            uy[idx] = kick * u0 * (2.0 * PI * (x + 0.25)).sin();
        }
    }
    equilibrium(&vs, &[n, n], &vec![1.0; n * n], &[ux, uy])
}

/// Random smooth vortex field on a periodic `extents` box.
///
/// The stream function is a sum of Fourier modes with wavenumbers up to
/// `max_wavenumber` and random phases; the resulting divergence-free velocity
/// is rescaled to peak speed `u0`. Density starts uniform.
pub fn random_vortices(
    extents: &[usize],
    seed: u64,
    u0: f64,
    max_wavenumber: usize,
) -> Result<DistributionField> {
    if extents.len() != 2 || max_wavenumber == 0 {
        return Err(Error::config("random vortices need a 2D grid and max_wavenumber >= 1"));
    }
    let vs = velocity_set(LatticeModel::D2Q9);
    let (nx, ny) = (extents[0], extents[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    let kmax = max_wavenumber as i64;
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            if (ky == 0 && kx <= 0) || kx * kx + ky * ky > kmax * kmax {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            // Energy concentrated at low wavenumbers.
            let amp = rng.gen::<f64>() / k2;
            let phase = 2.0 * PI * rng.gen::<f64>();
            modes.push((kx as f64, ky as f64, amp, phase));
        }
    }
    let mut ux = vec![0.0; nx * ny];
    let mut uy = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let idx = i * ny + j;
            for &(kx, ky, amp, phase) in &modes {
                let ax = 2.0 * PI * kx / nx as f64;
                let ay = 2.0 * PI * ky / ny as f64;
                let arg = ax * i as f64 + ay * j as f64 + phase;
                // psi = amp sin(arg): u = d psi / dy, v = -d psi / dx
                ux[idx] += amp * ay * arg.cos();
                uy[idx] -= amp * ax * arg.cos();
            }
        }
    }
    let peak = ux
        .iter()
        .zip(&uy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::numeric("degenerate vortex field"));
    }
    let s = u0 / peak;
    ux.iter_mut().chain(uy.iter_mut()).for_each(|v| *v *= s);
    equilibrium(&vs, extents, &vec![1.0; nx * ny], &[ux, uy])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments;

    #[test]
    fn taylor_green_peak_speed_and_zero_net_momentum() {
        let f = taylor_green(32, 0.02).unwrap();
        let u = moments::velocity(&f);
        let peak = (0..f.cells())
            .map(|x| (u[0][x].powi(2) + u[1][x].powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!((peak - 0.02).abs() < 1e-3);
        let p = moments::total_momentum(&f);
        assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn random_vortices_are_seeded_and_scaled() {
        let a = random_vortices(&[16, 16], 4, 0.05, 3).unwrap();
        let b = random_vortices(&[16, 16], 4, 0.05, 3).unwrap();
        let c = random_vortices(&[16, 16], 5, 0.05, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let u = moments::velocity(&a);
        let peak = (0..a.cells())
            .map(|x| (u[0][x].powi(2) + u[1][x].powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!((peak - 0.05).abs() < 1e-12);
    }

    #[test]
    fn shear_layer_is_finite() {
        let f = double_shear_layer(32, 0.04, 2.0, 0.05).unwrap();
        assert!(f.is_finite());
    }
}
