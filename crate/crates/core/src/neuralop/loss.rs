use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::{SymmetryElement, VelocitySet};
use crate::symmetry::equivariance_residual;

/// Coefficients of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub mse: f64,
    pub mom0: f64,
    pub mom1: f64,
    pub equiv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: 1.0,
            mom0: 0.1,
            mom1: 0.1,
            equiv: 0.01,
        }
    }
}

impl LossWeights {
    pub fn mse_only() -> Self {
        LossWeights {
            mse: 1.0,
            mom0: 0.0,
            mom1: 0.0,
            equiv: 0.0,
        }
    }

    pub fn zero() -> Self {
        LossWeights {
            mse: 0.0,
            mom0: 0.0,
            mom1: 0.0,
            equiv: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.mse, self.mom0, self.mom1, self.equiv]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub mse: f64,
    pub mom0: f64,
    pub mom1: f64,
    pub equiv: f64,
}

impl LossComponents {
    pub fn add(&mut self, other: &LossComponents) {
        self.mse += other.mse;
        self.mom0 += other.mom0;
        self.mom1 += other.mom1;
        self.equiv += other.equiv;
    }

    pub fn scaled(&self, s: f64) -> LossComponents {
        LossComponents {
            mse: self.mse * s,
            mom0: self.mom0 * s,
            mom1: self.mom1 * s,
            equiv: self.equiv * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.mse, self.mom0, self.mom1, self.equiv].iter().all(|v| v.is_finite())
    }
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.mse * c.mse + w.mom0 * c.mom0 + w.mom1 * c.mom1 + w.equiv * c.equiv
}

/// Data terms in raw population units: mean squared error over cells and
/// channels, and the squared density and momentum mismatch per cell.
pub fn data_components(pred: &DistributionField, target: &DistributionField, vs: &VelocitySet) -> Result<LossComponents> {
    pred.ensure_same_layout(target)?;
    if vs.model() != pred.model() {
        return Err(Error::shape("velocity set does not match the field's lattice"));
    }
    let n = pred.cells();
    let q = pred.q();
    let c = vs.velocities_f64();
    let mut sq = 0.0;
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    let mut mom = vec![0.0; vs.dim()];
    for x in 0..n {
        let mut dr = 0.0;
        mom.fill(0.0);
        for i in 0..q {
            let d = pred.get(i, x) - target.get(i, x);
            sq += d * d;
            dr += d;
            for (a, m) in mom.iter_mut().enumerate() {
                *m += c[i][a] * d;
            }
        }
        m0 += dr * dr;
        m1 += mom.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(LossComponents {
        mse: sq / (n * q) as f64,
        mom0: m0 / n as f64,
        mom1: m1 / n as f64,
        equiv: 0.0,
    })
}

/// Data terms plus the equivariance residual of `op` at `input` under
/// `element`, normalized by the cell count.
pub fn loss_components<G>(
    pred: &DistributionField,
    target: &DistributionField,
    input: &DistributionField,
    vs: &VelocitySet,
    op: &G,
    element: Option<&SymmetryElement>,
) -> Result<LossComponents>
where
    G: Fn(&DistributionField) -> Result<DistributionField> + ?Sized,
{
    let mut c = data_components(pred, target, vs)?;
    if let Some(e) = element {
        c.equiv = equivariance_residual(op, input, e)? / input.cells() as f64;
    }
    Ok(c)
}

/// Adds `∂(λ·data terms)/∂pred` into `grad`.
pub fn data_gradient(
    pred: &DistributionField,
    target: &DistributionField,
    vs: &VelocitySet,
    w: &LossWeights,
    grad: &mut [f64],
) {
    let n = pred.cells();
    let q = pred.q();
    let c = vs.velocities_f64();
    let g_mse = 2.0 * w.mse / (n * q) as f64;
    let g_mom = 2.0 / n as f64;
    let mut mom = vec![0.0; vs.dim()];
    for x in 0..n {
        let mut dr = 0.0;
        mom.fill(0.0);
        for i in 0..q {
            let d = pred.get(i, x) - target.get(i, x);
            dr += d;
            for (a, m) in mom.iter_mut().enumerate() {
                *m += c[i][a] * d;
            }
        }
        for i in 0..q {
            let d = pred.get(i, x) - target.get(i, x);
            let proj: f64 = mom.iter().enumerate().map(|(a, m)| c[i][a] * m).sum();
            grad[i * n + x] += g_mse * d + g_mom * (w.mom0 * dr + w.mom1 * proj);
        }
    }
}
