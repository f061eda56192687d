//! Lattice models, discrete velocity sets and their point-symmetry groups.
//!
//! Velocity ordering is canonical and fixed: index 0 is the rest velocity,
//! followed by the axis-aligned velocities, followed by the diagonals.
//!
//! ```text
//! D2Q9:   6   2   5
//!          \  |  /
//!         3 - 0 - 1
//!          /  |  \
//!         7   4   8
//! ```
//!
//! D3Q19 lists the six axis velocities as `+x, -x, +y, -y, +z, -z` and then the
//! twelve face diagonals in the planes `xy`, `xz`, `yz`, each in sign order
//! `(+,+), (-,+), (-,-), (+,-)`.
//!
//! Code elsewhere never relies on this ordering directly: symmetry handling goes
//! through the velocity permutations computed here.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Integer lattice vector. Two-dimensional models leave the last component 0.
pub type IVec = [i32; 3];

/// Integer spatial map. Two-dimensional models use the upper-left 2x2 block
/// and keep `m[2][2] == 1`.
pub type IMat = [[i32; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatticeModel {
    D2Q9,
    D3Q19,
}

impl LatticeModel {
    pub fn dim(self) -> usize {
        match self {
            LatticeModel::D2Q9 => 2,
            LatticeModel::D3Q19 => 3,
        }
    }

    pub fn q(self) -> usize {
        match self {
            LatticeModel::D2Q9 => 9,
            LatticeModel::D3Q19 => 19,
        }
    }

    /// Tag byte used by the binary formats.
    pub fn tag(self) -> u8 {
        match self {
            LatticeModel::D2Q9 => 0,
            LatticeModel::D3Q19 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(LatticeModel::D2Q9),
            1 => Ok(LatticeModel::D3Q19),
            t => Err(Error::config(format!("unsupported lattice model tag {t}"))),
        }
    }
}

impl fmt::Display for LatticeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeModel::D2Q9 => f.write_str("D2Q9"),
            LatticeModel::D3Q19 => f.write_str("D3Q19"),
        }
    }
}

impl FromStr for LatticeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D2Q9" => Ok(LatticeModel::D2Q9),
            "D3Q19" => Ok(LatticeModel::D3Q19),
            other => Err(Error::config(format!("unsupported lattice model {other:?}"))),
        }
    }
}

/// Discrete velocities with exact rational quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySet {
    model: LatticeModel,
    velocities: Vec<IVec>,
    weights: Vec<Rational>,
    cs2: Rational,
    opposite: Vec<usize>,
}

impl VelocitySet {
    pub fn model(&self) -> LatticeModel {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn q(&self) -> usize {
        self.velocities.len()
    }

    pub fn velocities(&self) -> &[IVec] {
        &self.velocities
    }

    pub fn velocity(&self, i: usize) -> IVec {
        self.velocities[i]
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn cs2(&self) -> Rational {
        self.cs2
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(ratio_to_f64).collect()
    }

    pub fn cs2_f64(&self) -> f64 {
        ratio_to_f64(&self.cs2)
    }

    /// Velocities as floating-point vectors of length `dim`.
    pub fn velocities_f64(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.velocities
            .iter()
            .map(|c| c[..d].iter().map(|&v| v as f64).collect())
            .collect()
    }

    /// Index of `-c_i`.
    pub fn opposite(&self, i: usize) -> usize {
        self.opposite[i]
    }

    pub fn index_of(&self, c: IVec) -> Option<usize> {
        self.velocities.iter().position(|&v| v == c)
    }
}

pub fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Canonical velocity set of a lattice model.
pub fn velocity_set(model: LatticeModel) -> VelocitySet {
    let (velocities, weights, cs2) = match model {
        LatticeModel::D2Q9 => {
            let v: Vec<IVec> = vec![
                [0, 0, 0],
                [1, 0, 0],
                [0, 1, 0],
                [-1, 0, 0],
                [0, -1, 0],
                [1, 1, 0],
                [-1, 1, 0],
                [-1, -1, 0],
                [1, -1, 0],
            ];
            let w = v
                .iter()
                .map(|c| match norm2(*c) {
                    0 => Rational::new(4, 9),
                    1 => Rational::new(1, 9),
                    _ => Rational::new(1, 36),
                })
                .collect();
            (v, w, Rational::new(1, 3))
        }
        LatticeModel::D3Q19 => {
            let mut v: Vec<IVec> = vec![
                [0, 0, 0],
                [1, 0, 0],
                [-1, 0, 0],
                [0, 1, 0],
                [0, -1, 0],
                [0, 0, 1],
                [0, 0, -1],
            ];
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                for (sa, sb) in [(1, 1), (-1, 1), (-1, -1), (1, -1)] {
                    let mut c = [0; 3];
                    c[a] = sa;
                    c[b] = sb;
                    v.push(c);
                }
            }
            let w = v
                .iter()
                .map(|c| match norm2(*c) {
                    0 => Rational::new(1, 3),
                    1 => Rational::new(1, 18),
                    _ => Rational::new(1, 36),
                })
                .collect();
            (v, w, Rational::new(1, 3))
        }
    };
    let opposite = velocities
        .iter()
        .map(|c| {
            let neg = [-c[0], -c[1], -c[2]];
            velocities.iter().position(|&v| v == neg).expect("velocity sets are symmetric")
        })
        .collect();
    VelocitySet {
        model,
        velocities,
        weights,
        cs2,
        opposite,
    }
}

fn norm2(c: IVec) -> i32 {
    c.iter().map(|v| v * v).sum()
}

pub(crate) fn mat_vec(m: &IMat, v: IVec) -> IVec {
    let mut out = [0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|k| m[r][k] * v[k]).sum();
    }
    out
}

pub(crate) fn mat_mul(a: &IMat, b: &IMat) -> IMat {
    let mut out = [[0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub(crate) fn transpose(m: &IMat) -> IMat {
    let mut out = [[0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[c][r];
        }
    }
    out
}

pub const IDENTITY: IMat = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// True when `m` is a signed permutation matrix acting on the first `dim`
/// axes (and is the identity on the rest).
pub fn is_signed_permutation(m: &IMat, dim: usize) -> bool {
    for r in 0..3 {
        for c in 0..3 {
            if r >= dim || c >= dim {
                let expect = i32::from(r == c);
                if m[r][c] != expect {
                    return false;
                }
            } else if !(-1..=1).contains(&m[r][c]) {
                return false;
            }
        }
    }
    mat_mul(m, &transpose(m)) == IDENTITY
}

/// A spatial symmetry `R` together with the velocity permutation `σ_R`
/// satisfying `R c_{σ(i)} = c_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetryElement {
    spatial: IMat,
    perm: Vec<usize>,
    label: String,
}

impl SymmetryElement {
    pub fn new(spatial: IMat, vs: &VelocitySet, label: impl Into<String>) -> Result<Self> {
        let perm = velocity_permutation(&spatial, vs)?;
        Ok(SymmetryElement {
            spatial,
            perm,
            label: label.into(),
        })
    }

    pub fn spatial(&self) -> &IMat {
        &self.spatial
    }

    /// `σ_R` as a lookup table: `perm()[i] == σ_R(i)`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_identity(&self) -> bool {
        self.spatial == IDENTITY
    }
}

/// Computes the unique `σ` with `R c_{σ(i)} = c_i` for every `i`.
pub fn velocity_permutation(r: &IMat, vs: &VelocitySet) -> Result<Vec<usize>> {
    if !is_signed_permutation(r, vs.dim()) {
        return Err(Error::symmetry(format!(
            "{r:?} is not a signed permutation matrix in {} dimensions",
            vs.dim()
        )));
    }
    let mut perm = Vec::with_capacity(vs.q());
    for (i, &ci) in vs.velocities().iter().enumerate() {
        let j = vs
            .velocities()
            .iter()
            .position(|&cj| mat_vec(r, cj) == ci)
            .ok_or_else(|| {
                Error::symmetry(format!("map {r:?} does not permute the velocity set (c_{i} = {ci:?})"))
            })?;
        perm.push(j);
    }
    Ok(perm)
}

/// Finite point group of a lattice, with its Cayley table.
///
/// Composition convention: `compose(a, b)` is the index of the matrix product
/// `R_a R_b`, and the field action is a left action,
/// `(R_a R_b) · f = R_a · (R_b · f)`. Under this convention the velocity
/// permutations compose contravariantly: `σ_{R_a R_b} = σ_b ∘ σ_a`.
#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    model: LatticeModel,
    elements: Vec<SymmetryElement>,
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl SymmetryGroup {
    pub fn model(&self) -> LatticeModel {
        self.model
    }

    pub fn elements(&self) -> &[SymmetryElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, idx: usize) -> &SymmetryElement {
        &self.elements[idx]
    }

    /// Index of the identity element (always 0).
    pub fn identity(&self) -> usize {
        0
    }

    pub fn compose(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.label == label)
    }

    pub fn index_of_matrix(&self, m: &IMat) -> Option<usize> {
        self.elements.iter().position(|e| &e.spatial == m)
    }

    /// Checks closure, identity, inverses and associativity on the table.
    pub fn verify_axioms(&self) -> Result<()> {
        let n = self.len();
        for a in 0..n {
            if self.table[0][a] != a || self.table[a][0] != a {
                return Err(Error::symmetry("element 0 is not a two-sided identity"));
            }
            let inv = self.inverse[a];
            if self.table[a][inv] != 0 || self.table[inv][a] != 0 {
                return Err(Error::symmetry(format!("inverse of element {a} is wrong")));
            }
            for b in 0..n {
                let ab = self.table[a][b];
                if ab >= n {
                    return Err(Error::symmetry("composition table is not closed"));
                }
                for c in 0..n {
                    if self.table[ab][c] != self.table[a][self.table[b][c]] {
                        return Err(Error::symmetry(format!(
                            "associativity fails for ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn label_2d(m: &IMat) -> String {
    let k = [[m[0][0], m[0][1]], [m[1][0], m[1][1]]];
    match k {
        [[1, 0], [0, 1]] => "identity",
        [[0, -1], [1, 0]] => "rot90",
        [[-1, 0], [0, -1]] => "rot180",
        [[0, 1], [-1, 0]] => "rot270",
        [[-1, 0], [0, 1]] => "reflect-x",
        [[1, 0], [0, -1]] => "reflect-y",
        [[0, 1], [1, 0]] => "reflect-diag",
        [[0, -1], [-1, 0]] => "reflect-antidiag",
        _ => unreachable!("not a D4 element"),
    }
    .to_string()
}

fn label_3d(m: &IMat) -> String {
    if *m == IDENTITY {
        return "identity".into();
    }
    // Row r maps onto axis perm[r] with sign s[r].
    let mut s = String::from("perm");
    for row in m {
        let (axis, val) = row.iter().enumerate().find(|(_, v)| **v != 0).unwrap();
        s.push(if val > &0 { '+' } else { '-' });
        s.push(['x', 'y', 'z'][axis]);
    }
    s
}

fn signed_permutations(dim: usize) -> Vec<IMat> {
    let perms: Vec<Vec<usize>> = match dim {
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    };
    let mut out = Vec::new();
    for p in &perms {
        for signs in 0..(1u32 << dim) {
            let mut m = IDENTITY;
            for r in 0..dim {
                for c in 0..dim {
                    m[r][c] = 0;
                }
            }
            for (r, &c) in p.iter().enumerate() {
                m[r][c] = if signs >> r & 1 == 1 { -1 } else { 1 };
            }
            out.push(m);
        }
    }
    out
}

/// Full point group of the lattice: D4 for D2Q9, Oh for D3Q19.
/// Element 0 is the identity.
pub fn symmetry_group(model: LatticeModel) -> SymmetryGroup {
    let vs = velocity_set(model);
    let dim = model.dim();
    let mut mats = signed_permutations(dim);
    mats.sort_by_key(|m| m != &IDENTITY);
    if dim == 2 {
        let order = [
            "identity",
            "rot90",
            "rot180",
            "rot270",
            "reflect-x",
            "reflect-y",
            "reflect-diag",
            "reflect-antidiag",
        ];
        mats.sort_by_key(|m| order.iter().position(|l| *l == label_2d(m)).unwrap());
    }
    let elements: Vec<SymmetryElement> = mats
        .iter()
        .map(|m| {
            let label = if dim == 2 { label_2d(m) } else { label_3d(m) };
            SymmetryElement::new(*m, &vs, label).expect("signed permutations preserve the lattice")
        })
        .collect();
    let n = elements.len();
    let index = |m: &IMat| elements.iter().position(|e| &e.spatial == m).expect("closed");
    let table: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| index(&mat_mul(&elements[a].spatial, &elements[b].spatial)))
                .collect()
        })
        .collect();
    let inverse = (0..n).map(|a| index(&transpose(&elements[a].spatial))).collect();
    SymmetryGroup {
        model,
        elements,
        table,
        inverse,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_isotropic_weights() -> Vec<(Rational, Rational, Rational, Rational)> {
        // Unknowns: rest weight w0, axis weight w1, diagonal weight w2, cs2.
        // Conditions on the 3-speed square lattice:
        //   w0 + 4 w1 + 4 w2 = 1
        //   sum w cx^2 = 2 w1 + 4 w2 = cs2
        //   sum w cx^4 = 3 sum w cx^2 cy^2   (fourth-order isotropy)
        //   sum w cx^2 cy^2 = 4 w2 = cs2^2
        let mut sols = Vec::new();
        for den in 1..=60i64 {
            for num in 1..den {
                let w2 = Rational::new(num, den);
                for den1 in 1..=60i64 {
                    for num1 in 1..den1 {
                        let w1 = Rational::new(num1, den1);
                        let cs2 = w1 * 2 + w2 * 4;
                        if w1 * 2 + w2 * 4 != w2 * 12 {
                            continue;
                        }
                        if w2 * 4 != cs2 * cs2 {
                            continue;
                        }
                        let w0 = Rational::from_integer(1) - w1 * 4 - w2 * 4;
                        if w0 > Rational::from_integer(0) {
                            sols.push((w0, w1, w2, cs2));
                        }
                    }
                }
            }
        }
        sols.sort();
        sols.dedup();
        sols
    }

    #[test]
    fn d2q9_weights_match_isotropy_solution() {
        let sols = brute_force_isotropic_weights();
        assert_eq!(sols.len(), 1);
        let (w0, w1, w2, cs2) = sols[0];
        let vs = velocity_set(LatticeModel::D2Q9);
        assert_eq!(vs.weights()[0], w0);
        assert_eq!(vs.cs2(), cs2);
        for (c, w) in vs.velocities().iter().zip(vs.weights()) {
            match norm2(*c) {
                0 => assert_eq!(*w, w0),
                1 => assert_eq!(*w, w1),
                _ => assert_eq!(*w, w2),
            }
        }
        assert_eq!(w0, Rational::new(4, 9));
        assert_eq!(w1, Rational::new(1, 9));
        assert_eq!(w2, Rational::new(1, 36));
    }

    fn check_moment_identities(vs: &VelocitySet) {
        let d = vs.dim();
        let total: Rational = vs.weights().iter().sum();
        assert_eq!(total, Rational::from_integer(1));
        for a in 0..d {
            let first: Rational = vs
                .velocities()
                .iter()
                .zip(vs.weights())
                .map(|(c, w)| w * i64::from(c[a]))
                .sum();
            assert_eq!(first, Rational::from_integer(0));
            for b in 0..d {
                let second: Rational = vs
                    .velocities()
                    .iter()
                    .zip(vs.weights())
                    .map(|(c, w)| w * i64::from(c[a] * c[b]))
                    .sum();
                let expect = if a == b { vs.cs2() } else { Rational::from_integer(0) };
                assert_eq!(second, expect, "second moment ({a},{b})");
            }
        }
        assert_eq!(vs.velocity(0), [0, 0, 0]);
    }

    #[test]
    fn velocity_sets_satisfy_moment_identities() {
        check_moment_identities(&velocity_set(LatticeModel::D2Q9));
        check_moment_identities(&velocity_set(LatticeModel::D3Q19));
    }

    #[test]
    fn d3q19_matches_enumeration() {
        let mut enumerated = Vec::new();
        for x in -2..=2 {
            for y in -2..=2 {
                for z in -2..=2 {
                    let c = [x, y, z];
                    if norm2(c) <= 2 && c.iter().all(|v: &i32| v.abs() <= 1) {
                        enumerated.push(c);
                    }
                }
            }
        }
        let vs = velocity_set(LatticeModel::D3Q19);
        assert_eq!(enumerated.len(), 19);
        let mut ours = vs.velocities().to_vec();
        ours.sort();
        enumerated.sort();
        assert_eq!(ours, enumerated);
        let counts = [0, 1, 2].map(|n| vs.velocities().iter().filter(|c| norm2(**c) == n).count());
        assert_eq!(counts, [1, 6, 12]);
    }

    #[test]
    fn group_sizes() {
        assert_eq!(symmetry_group(LatticeModel::D2Q9).len(), 8);
        assert_eq!(symmetry_group(LatticeModel::D3Q19).len(), 48);
    }

    #[test]
    fn oh_matches_brute_force_over_all_integer_matrices() {
        let vs = velocity_set(LatticeModel::D3Q19);
        let mut found = 0;
        for code in 0..3i32.pow(9) {
            let mut m = [[0; 3]; 3];
            let mut c = code;
            for r in 0..3 {
                for k in 0..3 {
                    m[r][k] = c % 3 - 1;
                    c /= 3;
                }
            }
            if mat_mul(&m, &transpose(&m)) != IDENTITY {
                continue;
            }
            let maps_onto = vs
                .velocities()
                .iter()
                .all(|&v| vs.index_of(mat_vec(&m, v)).is_some());
            if maps_onto {
                found += 1;
            }
        }
        assert_eq!(found, 48);
    }

    #[test]
    fn identity_permutation() {
        for model in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            let vs = velocity_set(model);
            let p = velocity_permutation(&IDENTITY, &vs).unwrap();
            assert_eq!(p, (0..vs.q()).collect::<Vec<_>>());
            let g = symmetry_group(model);
            assert_eq!(g.element(0).perm(), p.as_slice());
        }
    }

    #[test]
    fn rot90_permutation_matches_direct_enumeration() {
        let vs = velocity_set(LatticeModel::D2Q9);
        let rot: IMat = [[0, -1, 0], [1, 0, 0], [0, 0, 1]];
        // Enumerate every permutation of 9 indices satisfying R c_{σ(i)} = c_i.
        let mut solutions = Vec::new();
        let mut perm: Vec<usize> = (0..9).collect();
        permute(&mut perm, 0, &mut |p| {
            if (0..9).all(|i| mat_vec(&rot, vs.velocity(p[i])) == vs.velocity(i)) {
                solutions.push(p.to_vec());
            }
        });
        assert_eq!(solutions.len(), 1);
        let sigma = velocity_permutation(&rot, &vs).unwrap();
        assert_eq!(sigma, solutions[0]);
        // east (1) is reached by rotating south (4) by +90 degrees
        assert_eq!(sigma[1], 4);
        assert_eq!(sigma[2], 1);
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn rot45_is_rejected() {
        let vs = velocity_set(LatticeModel::D2Q9);
        // Closest integer "45 degree" map; not orthogonal and not a lattice symmetry.
        let rot45: IMat = [[1, -1, 0], [1, 1, 0], [0, 0, 1]];
        assert!(matches!(velocity_permutation(&rot45, &vs), Err(Error::Symmetry(_))));
    }

    #[test]
    fn group_axioms_and_equivariance_of_velocities() {
        for model in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            let vs = velocity_set(model);
            let g = symmetry_group(model);
            g.verify_axioms().unwrap();
            for e in g.elements() {
                for i in 0..vs.q() {
                    assert_eq!(mat_vec(e.spatial(), vs.velocity(e.perm()[i])), vs.velocity(i));
                    assert_eq!(vs.weights()[e.perm()[i]], vs.weights()[i]);
                }
            }
        }
    }

    #[test]
    fn permutation_of_product_is_reversed_composition() {
        for model in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            let g = symmetry_group(model);
            for a in 0..g.len() {
                for b in 0..g.len() {
                    let ab = g.element(g.compose(a, b)).perm();
                    let pa = g.element(a).perm();
                    let pb = g.element(b).perm();
                    for i in 0..pa.len() {
                        assert_eq!(ab[i], pb[pa[i]]);
                    }
                }
            }
        }
    }

    #[test]
    fn labels_are_unique() {
        for model in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            let g = symmetry_group(model);
            let mut labels: Vec<_> = g.elements().iter().map(|e| e.label().to_string()).collect();
            labels.sort();
            labels.dedup();
            assert_eq!(labels.len(), g.len());
        }
        let g = symmetry_group(LatticeModel::D2Q9);
        assert_eq!(g.element(g.find("rot90").unwrap()).spatial()[0][1], -1);
    }

    #[test]
    fn model_tags_round_trip() {
        for m in [LatticeModel::D2Q9, LatticeModel::D3Q19] {
            assert_eq!(LatticeModel::from_tag(m.tag()).unwrap(), m);
            assert_eq!(m.to_string().parse::<LatticeModel>().unwrap(), m);
        }
        assert!(LatticeModel::from_tag(7).is_err());
    }
}
