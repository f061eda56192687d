//! Rectangular grids and population fields stored as structure-of-arrays.

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;

/// Row-major grid; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    extents: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 3 {
            return Err(Error::shape(format!("grid must have 1 to 3 axes, got {}", extents.len())));
        }
        if extents.contains(&0) {
            return Err(Error::shape(format!("grid extents must be positive: {extents:?}")));
        }
        let mut strides = vec![1; extents.len()];
        for a in (0..extents.len() - 1).rev() {
            strides[a] = strides[a + 1] * extents[a + 1];
        }
        Ok(Grid {
            extents: extents.to_vec(),
            strides,
            len: extents.iter().product(),
        })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, mut idx: usize, out: &mut [usize]) {
        for (a, s) in self.strides.iter().enumerate() {
            out[a] = idx / s;
            idx %= s;
        }
    }

    /// Index of `coords + offset` with periodic wrap on every axis.
    pub fn wrap_offset(&self, coords: &[usize], offset: &[i64]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim() {
            let n = self.extents[a] as i64;
            let c = (coords[a] as i64 + offset[a]).rem_euclid(n);
            idx += c as usize * self.strides[a];
        }
        idx
    }
}

/// The populations `f_i(x)` of every discrete velocity on a grid.
///
/// Storage is one contiguous block per velocity index (`data[i * cells + x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    model: LatticeModel,
    grid: Grid,
    data: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(model: LatticeModel, extents: &[usize]) -> Result<Self> {
        let grid = Grid::new(extents)?;
        if grid.dim() != model.dim() {
            return Err(Error::shape(format!(
                "{model} needs a {}-dimensional grid, got {extents:?}",
                model.dim()
            )));
        }
        let data = vec![0.0; model.q() * grid.len()];
        Ok(DistributionField { model, grid, data })
    }

    pub fn from_data(model: LatticeModel, extents: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut f = Self::zeros(model, extents)?;
        if data.len() != f.data.len() {
            return Err(Error::shape(format!(
                "expected {} values for {model} on {extents:?}, got {}",
                f.data.len(),
                data.len()
            )));
        }
        f.data = data;
        Ok(f)
    }

    /// Every cell holds the same per-channel values.
    pub fn uniform(model: LatticeModel, extents: &[usize], values: &[f64]) -> Result<Self> {
        let mut f = Self::zeros(model, extents)?;
        if values.len() != model.q() {
            return Err(Error::shape("uniform values must have one entry per velocity"));
        }
        for (i, v) in values.iter().enumerate() {
            f.channel_mut(i).fill(*v);
        }
        Ok(f)
    }

    pub fn model(&self) -> LatticeModel {
        self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn extents(&self) -> &[usize] {
        self.grid.extents()
    }

    pub fn q(&self) -> usize {
        self.model.q()
    }

    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn data_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        let n = self.cells();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.cells();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, cell: usize) -> f64 {
        self.data[i * self.cells() + cell]
    }

    pub fn set(&mut self, i: usize, cell: usize, v: f64) {
        let n = self.cells();
        self.data[i * n + cell] = v;
    }

    pub fn same_layout(&self, other: &DistributionField) -> bool {
        self.model == other.model && self.grid == other.grid
    }

    pub fn ensure_same_layout(&self, other: &DistributionField) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{} on {:?} vs {} on {:?}",
                self.model,
                self.extents(),
                other.model,
                other.extents()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &DistributionField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Squared L2 distance.
    pub fn dist2(&self, other: &DistributionField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}
