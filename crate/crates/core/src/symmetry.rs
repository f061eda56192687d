//! Field-level group action `[R·f]_i(x) = f_{σ_R(i)}(R⁻¹x)` and
//! equivariance residuals.
//!
//! Grids are cell-centred and rotate about the grid centre: cell `n` on an
//! axis of extent `N` sits at doubled coordinate `2n - (N - 1)`, which keeps
//! every signed-permutation map an exact index permutation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{DistributionField, Grid};
use crate::lattice::{SymmetryElement, SymmetryGroup};

/// Precomputed gather for one element on one grid.
#[derive(Debug, Clone)]
pub struct GroupActionPlan {
    element: SymmetryElement,
    extents: Vec<usize>,
    /// `source[x]` is the flat index of `R⁻¹x`.
    source: Vec<u32>,
}

impl GroupActionPlan {
    pub fn new(element: &SymmetryElement, grid: &Grid) -> Result<Self> {
        let dim = grid.dim();
        let r = element.spatial();
        let ext = grid.extents();
        for a in 0..dim {
            for b in 0..dim {
                if r[a][b] != 0 && ext[a] != ext[b] {
                    return Err(Error::symmetry(format!(
                        "{} maps axis {b} onto axis {a} but extents {ext:?} differ",
                        element.label()
                    )));
                }
            }
        }
        let mut source = Vec::with_capacity(grid.len());
        let mut x = vec![0usize; dim];
        let mut src = vec![0usize; dim];
        for idx in 0..grid.len() {
            grid.coords(idx, &mut x);
            // R⁻¹ = Rᵀ for signed permutations.
            for a in 0..dim {
                let mut doubled = 0i64;
                for b in 0..dim {
                    let xb = 2 * x[b] as i64 - (ext[b] as i64 - 1);
                    doubled += r[b][a] as i64 * xb;
                }
                src[a] = ((doubled + ext[a] as i64 - 1) / 2) as usize;
            }
            source.push(grid.index(&src) as u32);
        }
        Ok(GroupActionPlan {
            element: element.clone(),
            extents: ext.to_vec(),
            source,
        })
    }

    pub fn element(&self) -> &SymmetryElement {
        &self.element
    }

    fn check(&self, f: &DistributionField) -> Result<()> {
        if f.extents() != self.extents.as_slice() || f.q() != self.element.perm().len() {
            return Err(Error::shape(format!(
                "plan for {:?} with Q={} applied to {} on {:?}",
                self.extents,
                self.element.perm().len(),
                f.model(),
                f.extents()
            )));
        }
        Ok(())
    }

    /// `dst = R · src` on raw channel-major buffers.
    pub fn apply_raw(&self, src: &[f64], dst: &mut [f64]) {
        let n = self.source.len();
        for (i, &si) in self.element.perm().iter().enumerate() {
            let from = &src[si * n..(si + 1) * n];
            let to = &mut dst[i * n..(i + 1) * n];
            for (t, &s) in to.iter_mut().zip(&self.source) {
                *t = from[s as usize];
            }
        }
    }

    /// `dst = Rᵀ · src`, the adjoint (and inverse) of [`Self::apply_raw`].
    pub fn apply_adjoint_raw(&self, src: &[f64], dst: &mut [f64]) {
        let n = self.source.len();
        for (i, &si) in self.element.perm().iter().enumerate() {
            let from = &src[i * n..(i + 1) * n];
            let to = &mut dst[si * n..(si + 1) * n];
            for (v, &s) in from.iter().zip(&self.source) {
                to[s as usize] = *v;
            }
        }
    }

    pub fn apply(&self, f: &DistributionField) -> Result<DistributionField> {
        self.check(f)?;
        let mut out = f.clone();
        self.apply_raw(f.data(), out.data_mut());
        Ok(out)
    }

    pub fn apply_inverse(&self, f: &DistributionField) -> Result<DistributionField> {
        self.check(f)?;
        let mut out = f.clone();
        self.apply_adjoint_raw(f.data(), out.data_mut());
        Ok(out)
    }

    fn gather_scalar(&self, s: &[f64]) -> Vec<f64> {
        self.source.iter().map(|&k| s[k as usize]).collect()
    }
}

/// `R · f`.
pub fn apply_group_action(element: &SymmetryElement, f: &DistributionField) -> Result<DistributionField> {
    if element.perm().len() != f.q() {
        return Err(Error::symmetry(format!(
            "element {} acts on Q={} but field has Q={}",
            element.label(),
            element.perm().len(),
            f.q()
        )));
    }
    GroupActionPlan::new(element, f.grid())?.apply(f)
}

/// Scalar field transported by `R`: `s'(x) = s(R⁻¹x)`.
pub fn apply_to_scalar(element: &SymmetryElement, grid: &Grid, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != grid.len() {
        return Err(Error::shape("scalar field does not match grid"));
    }
    Ok(GroupActionPlan::new(element, grid)?.gather_scalar(s))
}

/// Vector field transported by `R`: `v'(x) = R v(R⁻¹x)`.
pub fn apply_to_vector(element: &SymmetryElement, grid: &Grid, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = grid.dim();
    if v.len() != dim || v.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::shape("vector field does not match grid"));
    }
    let plan = GroupActionPlan::new(element, grid)?;
    let moved: Vec<Vec<f64>> = v.iter().map(|c| plan.gather_scalar(c)).collect();
    let r = element.spatial();
    Ok((0..dim)
        .map(|a| {
            (0..grid.len())
                .map(|x| (0..dim).map(|b| r[a][b] as f64 * moved[b][x]).sum())
                .collect()
        })
        .collect())
}

/// `‖G(R·f) − R·G(f)‖₂²`.
pub fn equivariance_residual<G>(op: &G, f: &DistributionField, element: &SymmetryElement) -> Result<f64>
where
    G: Fn(&DistributionField) -> Result<DistributionField> + ?Sized,
{
    let plan = GroupActionPlan::new(element, f.grid())?;
    let lhs = op(&plan.apply(f)?)?;
    let rhs_in = op(f)?;
    let rhs = plan.apply(&rhs_in)?;
    lhs.ensure_same_layout(&rhs)?;
    Ok(lhs.dist2(&rhs))
}

/// Mean residual over `elements`; zero for an empty set.
pub fn equivariance_loss<G>(op: &G, f: &DistributionField, elements: &[SymmetryElement]) -> Result<f64>
where
    G: Fn(&DistributionField) -> Result<DistributionField> + ?Sized,
{
    if elements.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in elements {
        total += equivariance_residual(op, f, e)?;
    }
    Ok(total / elements.len() as f64)
}

/// Uniformly random non-identity element index.
pub fn sample_non_identity<R: Rng + ?Sized>(group: &SymmetryGroup, rng: &mut R) -> usize {
    debug_assert!(group.len() > 1);
    1 + rng.gen_range(0..group.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{symmetry_group, LatticeModel};
    use crate::solver::{self, init, SolverConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(model: LatticeModel, extents: &[usize], seed: u64) -> DistributionField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = DistributionField::zeros(model, extents).unwrap();
        f.data_mut().iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
        f
    }

    #[test]
    fn identity_and_inverse() {
        for (model, ext) in [(LatticeModel::D2Q9, vec![6, 6]), (LatticeModel::D3Q19, vec![3, 4, 3])] {
            let g = symmetry_group(model);
            let f = random_field(model, &ext, 1);
            assert_eq!(apply_group_action(g.element(0), &f).unwrap(), f);
            for a in 0..g.len() {
                let e = g.element(a);
                let plan = match GroupActionPlan::new(e, f.grid()) {
                    Ok(p) => p,
                    Err(Error::Symmetry(_)) => continue,
                    Err(e) => panic!("{e}"),
                };
                let rf = plan.apply(&f).unwrap();
                let back = apply_group_action(g.element(g.inverse(a)), &rf).unwrap();
                assert_eq!(back, f);
                assert_eq!(plan.apply_inverse(&rf).unwrap(), f);
            }
        }
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let r = g.find("rot90").unwrap();
        // Composition-table oracle: rot90^4 = identity.
        let mut acc = 0;
        for _ in 0..4 {
            acc = g.compose(r, acc);
        }
        assert_eq!(acc, 0);
        for ext in [[7usize, 7], [8, 8]] {
            let f = random_field(LatticeModel::D2Q9, &ext, 2);
            let mut h = f.clone();
            for _ in 0..4 {
                h = apply_group_action(g.element(r), &h).unwrap();
            }
            assert_eq!(h, f);
        }
    }

    #[test]
    fn rot90_moves_cells_about_the_centre() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let e = g.element(g.find("rot90").unwrap());
        let grid = Grid::new(&[4, 4]).unwrap();
        let mut s = vec![0.0; 16];
        s[grid.index(&[3, 1])] = 1.0;
        let out = apply_to_scalar(e, &grid, &s).unwrap();
        // doubled coords (3,-1) rotate to (1,3) -> cell (2,3)
        assert_eq!(out[grid.index(&[2, 3])], 1.0);
    }

    #[test]
    fn action_is_a_left_action() {
        for (model, ext) in [(LatticeModel::D2Q9, vec![5, 5]), (LatticeModel::D3Q19, vec![3, 3, 3])] {
            let g = symmetry_group(model);
            let f = random_field(model, &ext, 3);
            for a in 0..g.len() {
                let ra = apply_group_action(g.element(a), &f).unwrap();
                for b in 0..g.len() {
                    let lhs = apply_group_action(g.element(g.compose(b, a)), &f).unwrap();
                    let rhs = apply_group_action(g.element(b), &ra).unwrap();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn rotation_on_rectangle_is_rejected_but_reflection_allowed() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let f = random_field(LatticeModel::D2Q9, &[4, 6], 0);
        assert!(matches!(
            apply_group_action(g.element(g.find("rot90").unwrap()), &f),
            Err(Error::Symmetry(_))
        ));
        assert!(apply_group_action(g.element(g.find("reflect-x").unwrap()), &f).is_ok());
        assert!(apply_group_action(g.element(g.find("rot180").unwrap()), &f).is_ok());
    }

    #[test]
    fn identity_operator_has_zero_residual() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let f = random_field(LatticeModel::D2Q9, &[6, 6], 5);
        let id = |x: &DistributionField| Ok(x.clone());
        for e in g.elements() {
            assert_eq!(equivariance_residual(&id, &f, e).unwrap(), 0.0);
        }
        assert_eq!(equivariance_loss(&id, &f, &[]).unwrap(), 0.0);
        assert_eq!(equivariance_loss(&id, &f, &g.elements()[..1]).unwrap(), 0.0);
        assert_eq!(equivariance_loss(&id, &f, g.elements()).unwrap(), 0.0);
    }

    #[test]
    fn commuting_actions_have_zero_residual() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let f = random_field(LatticeModel::D2Q9, &[6, 6], 6);
        for a in 0..g.len() {
            let op_elem = g.element(a).clone();
            let op = move |x: &DistributionField| apply_group_action(&op_elem, x);
            for b in 0..g.len() {
                let res = equivariance_residual(&op, &f, g.element(b)).unwrap();
                if g.compose(a, b) == g.compose(b, a) {
                    assert_eq!(res, 0.0);
                } else {
                    assert!(res > 0.0, "non-commuting pair ({a},{b}) gave zero residual");
                }
            }
        }
    }

    #[test]
    fn solver_step_residual_is_rounding_level() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let f = init::random_perturbation(LatticeModel::D2Q9, &[12, 12], 8, 0.1, &[0.02, 0.03]).unwrap();
        let cfg = SolverConfig::periodic(2, 0.6);
        let op = |x: &DistributionField| solver::step(x, &cfg);
        let norm2 = f.norm_l2().powi(2);
        for e in g.elements() {
            assert!(equivariance_residual(&op, &f, e).unwrap() <= 1e-12 * norm2);
        }
    }

    #[test]
    fn vector_action_rotates_components() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let e = g.element(g.find("rot90").unwrap());
        let grid = Grid::new(&[3, 3]).unwrap();
        let v = vec![vec![1.0; 9], vec![0.0; 9]];
        let out = apply_to_vector(e, &grid, &v).unwrap();
        assert!(out[0].iter().all(|x| *x == 0.0));
        assert!(out[1].iter().all(|x| *x == 1.0));
    }

    #[test]
    fn sampled_elements_are_not_identity() {
        let g = symmetry_group(LatticeModel::D2Q9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = [false; 8];
        for _ in 0..200 {
            let k = sample_non_identity(&g, &mut rng);
            assert_ne!(k, 0);
            seen[k] = true;
        }
        assert!(seen[1..].iter().all(|s| *s));
    }

    proptest! {
        #[test]
        fn action_preserves_norm(seed in 0u64..500, elem in 0usize..8, n in 2usize..9) {
            let g = symmetry_group(LatticeModel::D2Q9);
            let f = random_field(LatticeModel::D2Q9, &[n, n], seed);
            let rf = apply_group_action(g.element(elem), &f).unwrap();
            let mut a: Vec<f64> = f.data().to_vec();
            let mut b: Vec<f64> = rf.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert!((rf.norm_l2() - f.norm_l2()).abs() <= 1e-12 * f.norm_l2());
        }

        #[test]
        fn residual_is_non_negative(seed in 0u64..200, elem in 0usize..8, scale in -2.0f64..2.0) {
            let g = symmetry_group(LatticeModel::D2Q9);
            let f = random_field(LatticeModel::D2Q9, &[4, 4], seed);
            // Channel-dependent scaling breaks equivariance unless scale == 0.
            let op = |x: &DistributionField| {
                let mut y = x.clone();
                for i in 0..9 {
                    let s = 1.0 + scale * i as f64;
                    y.channel_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                Ok(y)
            };
            let r = equivariance_residual(&op, &f, g.element(elem)).unwrap();
            prop_assert!(r >= 0.0);
        }
    }
}
