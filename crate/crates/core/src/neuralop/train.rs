use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{config_hash, KineticDataset, KineticSample};
use crate::error::{Error, Result};
use crate::eval::{self, Quantity};
use crate::field::DistributionField;
use crate::lattice::{symmetry_group, velocity_set, SymmetryGroup, VelocitySet};
use crate::solver::{Trajectory, DIVERGENCE_THRESHOLD};
use crate::symmetry::{sample_non_identity, GroupActionPlan};

use super::loss::{data_components, data_gradient, total_loss, LossComponents, LossWeights};
use super::model::{Normalizer, SpectralOperatorModel};
use super::spectral::SpectralTransform;

/// Transform and group-action plans for one grid.
pub struct GradContext {
    transform: SpectralTransform,
    plans: Vec<GroupActionPlan>,
    vs: VelocitySet,
}

impl GradContext {
    pub fn new(model: &SpectralOperatorModel, extents: &[usize], group: &SymmetryGroup) -> Result<Self> {
        let grid = crate::field::Grid::new(extents)?;
        Ok(GradContext {
            transform: model.transform_for(extents)?,
            plans: group
                .elements()
                .iter()
                .map(|e| GroupActionPlan::new(e, &grid))
                .collect::<Result<_>>()?,
            vs: velocity_set(model.config.lattice),
        })
    }
}

fn sample_loss(
    model: &SpectralOperatorModel,
    ctx: &GradContext,
    s: &KineticSample,
    element: Option<usize>,
    grad: Option<&mut [f64]>,
    w: &LossWeights,
) -> Result<LossComponents> {
    let (pred, tape) = model.forward_tape(&s.input, &ctx.transform)?;
    let mut comps = data_components(&pred, &s.target, &ctx.vs)?;
    let n = s.input.cells();
    let mut g_pred = vec![0.0; pred.data().len()];
    data_gradient(&pred, &s.target, &ctx.vs, w, &mut g_pred);
    let mut equiv_part = None;
    if let Some(e) = element {
        let plan = &ctx.plans[e];
        let rf = plan.apply(&s.input)?;
        let (g_rf, tape_rf) = model.forward_tape(&rf, &ctx.transform)?;
        let r_pred = plan.apply(&pred)?;
        let resid: Vec<f64> = g_rf.data().iter().zip(r_pred.data()).map(|(a, b)| a - b).collect();
        comps.equiv = resid.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if w.equiv != 0.0 {
            let scale = 2.0 * w.equiv / n as f64;
            let g_lhs: Vec<f64> = resid.iter().map(|v| v * scale).collect();
            let mut g_back = vec![0.0; resid.len()];
            plan.apply_adjoint_raw(&g_lhs, &mut g_back);
            g_pred.iter_mut().zip(&g_back).for_each(|(g, b)| *g -= b);
            equiv_part = Some((tape_rf, g_lhs));
        }
    }
    if !comps.is_finite() {
        return Err(Error::numeric("non-finite loss"));
    }
    if let Some(grad) = grad {
        model.backward(&tape, &ctx.transform, &g_pred, grad);
        if let Some((tape_rf, g_lhs)) = equiv_part {
            model.backward(&tape_rf, &ctx.transform, &g_lhs, grad);
        }
    }
    Ok(comps)
}

/// Batch-mean loss components. The equivariance term is evaluated only when
/// `element` is given.
pub fn batch_loss_with(
    model: &SpectralOperatorModel,
    ctx: &GradContext,
    batch: &[&KineticSample],
    w: &LossWeights,
    element: Option<usize>,
) -> Result<LossComponents> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<LossComponents> = batch
        .par_iter()
        .map(|s| sample_loss(model, ctx, s, element, None, w))
        .collect::<Result<_>>()?;
    let mut acc = LossComponents::default();
    parts.iter().for_each(|c| acc.add(c));
    Ok(acc.scaled(1.0 / batch.len() as f64))
}

/// Exact gradient of the batch-mean weighted loss. Per-sample work runs in
/// parallel and is reduced in batch order.
pub fn gradients_with(
    model: &SpectralOperatorModel,
    ctx: &GradContext,
    batch: &[&KineticSample],
    w: &LossWeights,
    element: Option<usize>,
) -> Result<(LossComponents, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = model.params.len();
    let parts: Vec<(LossComponents, Vec<f64>)> = batch
        .par_iter()
        .map(|s| {
            let mut g = vec![0.0; p];
            let c = sample_loss(model, ctx, s, element, Some(&mut g), w)?;
            Ok((c, g))
        })
        .collect::<Result<_>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut acc = LossComponents::default();
    let mut grad = vec![0.0; p];
    for (c, g) in &parts {
        acc.add(c);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|v| *v *= inv);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    Ok((acc.scaled(inv), grad))
}

/// Convenience wrapper building the grid context from the first sample.
pub fn gradients(
    model: &SpectralOperatorModel,
    batch: &[&KineticSample],
    w: &LossWeights,
    group: &SymmetryGroup,
    element: Option<usize>,
) -> Result<(LossComponents, Vec<f64>)> {
    let first = batch.first().ok_or(Error::EmptyDataset)?;
    let ctx = GradContext::new(model, first.input.extents(), group)?;
    gradients_with(model, &ctx, batch, w, element)
}

pub fn batch_loss(
    model: &SpectralOperatorModel,
    batch: &[&KineticSample],
    w: &LossWeights,
    group: &SymmetryGroup,
    element: Option<usize>,
) -> Result<LossComponents> {
    let first = batch.first().ok_or(Error::EmptyDataset)?;
    let ctx = GradContext::new(model, first.input.extents(), group)?;
    batch_loss_with(model, &ctx, batch, w, element)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Cosine decay from `lr` at step 0 towards zero at `total`.
pub fn cosine_lr(lr: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr;
    }
    0.5 * lr * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub cosine: bool,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            cosine: true,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config("Adam betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss components over the epoch's batches.
    pub train: LossComponents,
    pub train_total: f64,
    /// Mean single-jump velocity relative L2 on the validation set.
    pub val_velocity_rel_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub model_config_hash: String,
    pub train_config_hash: String,
    pub dataset_hash: String,
    /// Multiplier applied to the weighted loss before differentiation.
    pub loss_scale: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub diverged_at: Option<usize>,
    pub wall_time_s: f64,
}

/// Trains a copy of `model` and returns the best-validation parameters.
///
/// The normalizer is refit on the training inputs. The weighted loss is
/// multiplied by the inverse mean channel variance so raw-unit losses reach
/// the optimizer at order one. The equivariance term is evaluated only when
/// its weight is positive, with one random non-identity element per batch.
/// A non-finite loss stops training; the report records the epoch and the
/// best parameters so far are returned.
pub fn train(
    model: &SpectralOperatorModel,
    train_ds: &KineticDataset,
    val_ds: &KineticDataset,
    cfg: &TrainConfig,
) -> Result<(SpectralOperatorModel, TrainReport)> {
    cfg.validate()?;
    model.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ds in [train_ds, val_ds] {
        if !ds.is_empty() && ds.model != model.config.lattice {
            return Err(Error::shape(format!(
                "dataset holds {} fields, model expects {}",
                ds.model, model.config.lattice
            )));
        }
    }
    if val_ds.extents != train_ds.extents && !val_ds.is_empty() {
        return Err(Error::shape("training and validation grids differ"));
    }
    let start = Instant::now();
    let group = symmetry_group(model.config.lattice);
    let mut model = model.clone();
    model.normalizer = Normalizer::fit(train_ds, &group)?;
    let loss_scale = {
        let s = &model.normalizer.std;
        s.len() as f64 / s.iter().map(|v| v * v).sum::<f64>()
    };
    let ctx = GradContext::new(&model, &train_ds.extents, &group)?;
    let use_equiv = cfg.weights.equiv > 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params.len(), cfg.beta1, cfg.beta2, cfg.eps);
    let n = train_ds.len();
    let batches = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best = (0, f64::INFINITY, model.params.clone());
    let mut diverged_at = None;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossComponents::default();
        let mut acc_total = 0.0;
        let mut lr = cfg.lr;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&KineticSample> = chunk.iter().map(|&k| &train_ds.samples[k]).collect();
            let e = sample_non_identity(&group, &mut rng);
            let result = gradients_with(&model, &ctx, &batch, &cfg.weights, use_equiv.then_some(e));
            let (comps, mut grad) = match result {
                Ok(v) => v,
                Err(Error::Numeric(_)) => {
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(other) => return Err(other),
            };
            grad.iter_mut().for_each(|g| *g *= loss_scale);
            lr = if cfg.cosine {
                cosine_lr(cfg.lr, step, total_steps)
            } else {
                cfg.lr
            };
            adam.step(&mut model.params, &grad, lr);
            step += 1;
            acc.add(&comps.scaled(chunk.len() as f64));
            acc_total += total_loss(&comps, &cfg.weights) * chunk.len() as f64;
        }
        let train_mean = acc.scaled(1.0 / n as f64);
        let train_total = acc_total / n as f64;
        if !train_total.is_finite() || model.params.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(epoch);
            break;
        }
        let val = if val_ds.is_empty() {
            None
        } else {
            match eval::single_jump_error(&model, val_ds, Quantity::Velocity) {
                Ok(v) => Some(v),
                Err(Error::Numeric(_)) => {
                    diverged_at = Some(epoch);
                    break;
                }
                Err(other) => return Err(other),
            }
        };
        let score = val.unwrap_or(train_total);
        if score < best.1 {
            best = (epoch, score, model.params.clone());
        }
        records.push(EpochRecord {
            epoch,
            lr,
            train: train_mean,
            train_total,
            val_velocity_rel_l2: val,
        });
    }

    if best.0 > 0 {
        model.params = best.2;
    }
    let report = TrainReport {
        seed: cfg.seed,
        model_config_hash: config_hash(&model.config)?,
        train_config_hash: config_hash(cfg)?,
        dataset_hash: train_ds.provenance.config_hash.clone(),
        loss_scale,
        epochs: records,
        best_epoch: best.0,
        best_score: best.1,
        diverged_at,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Autoregressive rollout `f_{k+1} = G(f_k)`. Snapshot times count operator
/// applications.
pub fn rollout(model: &SpectralOperatorModel, f0: &DistributionField, steps: usize) -> Result<Trajectory> {
    rollout_with(&|f: &DistributionField| model.forward(f), f0, steps)
}

/// Rollout of any operator.
pub fn rollout_with<G>(op: &G, f0: &DistributionField, steps: usize) -> Result<Trajectory>
where
    G: Fn(&DistributionField) -> Result<DistributionField> + ?Sized,
{
    if steps == 0 {
        return Err(Error::config("rollout needs at least one step"));
    }
    let mut snapshots: Vec<DistributionField> = Vec::with_capacity(steps);
    for k in 1..=steps {
        let prev = snapshots.last().unwrap_or(f0);
        let next = op(prev).map_err(|e| Error::Divergence {
            step: k,
            reason: e.to_string(),
        })?;
        if !next.is_finite() || next.max_abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                step: k,
                reason: "operator output left the finite bounded range".into(),
            });
        }
        snapshots.push(next);
    }
    Ok(Trajectory {
        snapshots,
        times: (1..=steps as u64).collect(),
        stride: 1,
        provenance: Default::default(),
    })
}
