//! Relative L2 errors on macroscopic fields, rollout error curves and
//! multi-seed aggregation with CSV/JSON reports.
//!
//! CSV schema of an ensemble report: `label,quantity,step,t_star,mean,spread,ci95,n`.
//! `spread` is the population standard deviation across runs and `ci95` the
//! half-width of a Student-t 95% interval for the mean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::KineticDataset;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::moments;
use crate::neuralop::SpectralOperatorModel;
use crate::solver::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Velocity,
    Density,
    Population,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Velocity => "velocity",
            Quantity::Density => "density",
            Quantity::Population => "population",
        }
    }
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!("{} values vs {} reference values", pred.len(), reference.len())));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::numeric("reference field has zero norm"));
    }
    let num: f64 = pred.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// The macroscopic field a quantity is measured on, flattened.
pub fn extract(f: &DistributionField, q: Quantity) -> Vec<f64> {
    match q {
        Quantity::Velocity => moments::velocity(f).concat(),
        Quantity::Density => moments::density(f),
        Quantity::Population => f.data().to_vec(),
    }
}

pub fn field_error(pred: &DistributionField, reference: &DistributionField, q: Quantity) -> Result<f64> {
    pred.ensure_same_layout(reference)?;
    relative_l2(&extract(pred, q), &extract(reference, q))
}

/// Mean single-jump error of `model` over a dataset.
pub fn single_jump_error(model: &SpectralOperatorModel, ds: &KineticDataset, q: Quantity) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let errs: Vec<f64> = ds
        .samples
        .par_iter()
        .map(|s| field_error(&model.forward(&s.input)?, &s.target, q))
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Errors of one autoregressive rollout against a reference trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutErrors {
    /// Operator applications, `1..=n`.
    pub steps: Vec<usize>,
    /// `t* = step / n` for the requested rollout length `n`.
    pub t_star: Vec<f64>,
    pub velocity: Vec<f64>,
    pub density: Vec<f64>,
    pub population: Vec<f64>,
    /// Step at which the rollout diverged; later points are absent.
    pub diverged_at: Option<usize>,
}

impl RolloutErrors {
    pub fn curve(&self, q: Quantity) -> &[f64] {
        match q {
            Quantity::Velocity => &self.velocity,
            Quantity::Density => &self.density,
            Quantity::Population => &self.population,
        }
    }
}

/// Rolls `op` out from the first snapshot of `traj` and compares with the
/// snapshots one jump apart. `max_steps` caps the rollout length.
pub fn evaluate_rollout<G>(op: &G, traj: &Trajectory, jump: u64, max_steps: Option<usize>) -> Result<RolloutErrors>
where
    G: Fn(&DistributionField) -> Result<DistributionField> + ?Sized,
{
    if traj.stride == 0 || jump == 0 || jump % traj.stride != 0 {
        return Err(Error::config(format!(
            "jump {jump} is not a positive multiple of the trajectory stride {}",
            traj.stride
        )));
    }
    let k = (jump / traj.stride) as usize;
    let available = traj.snapshots.len().saturating_sub(1) / k;
    let n = max_steps.map_or(available, |m| m.min(available));
    if n == 0 {
        return Err(Error::config("trajectory too short for a single jump"));
    }
    let mut out = RolloutErrors {
        steps: Vec::with_capacity(n),
        t_star: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
        density: Vec::with_capacity(n),
        population: Vec::with_capacity(n),
        diverged_at: None,
    };
    let mut f = traj.snapshots[0].clone();
    for j in 1..=n {
        let next = match op(&f) {
            Ok(v) if v.is_finite() => v,
            _ => {
                out.diverged_at = Some(j);
                break;
            }
        };
        let reference = &traj.snapshots[j * k];
        out.steps.push(j);
        out.t_star.push(j as f64 / n as f64);
        out.velocity.push(field_error(&next, reference, Quantity::Velocity)?);
        out.density.push(field_error(&next, reference, Quantity::Density)?);
        out.population.push(field_error(&next, reference, Quantity::Population)?);
        f = next;
    }
    Ok(out)
}

pub fn evaluate_model_rollout(
    model: &SpectralOperatorModel,
    traj: &Trajectory,
    jump: u64,
    max_steps: Option<usize>,
) -> Result<RolloutErrors> {
    evaluate_rollout(&|f: &DistributionField| model.forward(f), traj, jump, max_steps)
}

/// Pointwise mean of several curves of equal length.
pub fn mean_curves(curves: &[Vec<f64>]) -> Result<Vec<f64>> {
    let len = curves.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::shape("curves differ in length"));
    }
    Ok((0..len)
        .map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub quantity: Quantity,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
    pub ci95: Vec<f64>,
    pub n: usize,
}

/// Mean, population standard deviation and t-interval half-width per point.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let ci = if values.len() > 1 {
        let sample_sd = (var * n / (n - 1.0)).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof").inverse_cdf(0.975);
        t * sample_sd / n.sqrt()
    } else {
        f64::NAN
    };
    (mean, var.sqrt(), ci)
}

/// Aggregates runs over their common completed prefix.
pub fn aggregate(runs: &[&RolloutErrors], q: Quantity) -> Result<ErrorCurve> {
    if runs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = runs.iter().map(|r| r.curve(q).len()).min().unwrap_or(0);
    let mut curve = ErrorCurve {
        quantity: q,
        times: runs[0].t_star[..len].to_vec(),
        mean: Vec::with_capacity(len),
        spread: Vec::with_capacity(len),
        ci95: Vec::with_capacity(len),
        n: runs.len(),
    };
    for t in 0..len {
        let vals: Vec<f64> = runs.iter().map(|r| r.curve(q)[t]).collect();
        let (m, s, c) = summarize(&vals);
        curve.mean.push(m);
        curve.spread.push(s);
        curve.ci95.push(c);
    }
    Ok(curve)
}

/// Outcome of one seed: rollout errors or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub errors: Option<RolloutErrors>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub label: String,
    pub seeds: Vec<u64>,
    pub velocity: ErrorCurve,
    pub density: ErrorCurve,
    /// Seeds whose training or rollout failed or diverged, with the reason.
    pub flagged: Vec<(u64, String)>,
}

impl EnsembleReport {
    /// Mean velocity error at the last common rollout time.
    pub fn final_velocity(&self) -> Option<f64> {
        self.velocity.mean.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,quantity,step,t_star,mean,spread,ci95,n\n");
        for c in [&self.velocity, &self.density] {
            for t in 0..c.mean.len() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    self.label,
                    c.quantity.name(),
                    t + 1,
                    c.times[t],
                    c.mean[t],
                    c.spread[t],
                    c.ci95[t],
                    c.n
                );
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Aggregates per-seed outcomes. Failed or diverged runs are listed in
/// `flagged`; completed rollouts enter the curves.
pub fn ensemble_report(label: &str, runs: &[RunOutcome]) -> Result<EnsembleReport> {
    if runs.len() < 2 {
        return Err(Error::config("an ensemble needs at least two seeds"));
    }
    let mut flagged = Vec::new();
    let mut ok = Vec::new();
    for r in runs {
        match (&r.errors, &r.failure) {
            (Some(e), None) => {
                if let Some(step) = e.diverged_at {
                    flagged.push((r.seed, format!("rollout diverged at step {step}")));
                }
                ok.push(e);
            }
            (_, Some(msg)) => flagged.push((r.seed, msg.clone())),
            (None, None) => flagged.push((r.seed, "no result".into())),
        }
    }
    if ok.is_empty() {
        return Err(Error::numeric(format!("every run of '{label}' failed: {flagged:?}")));
    }
    Ok(EnsembleReport {
        label: label.to_string(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        velocity: aggregate(&ok, Quantity::Velocity)?,
        density: aggregate(&ok, Quantity::Density)?,
        flagged,
    })
}

/// Final-time summary rows for several ensembles.
pub fn comparison_csv(reports: &[EnsembleReport]) -> String {
    let mut s = String::from("label,quantity,final_mean,final_spread,final_ci95,n,flagged\n");
    for r in reports {
        for c in [&r.velocity, &r.density] {
            if let (Some(m), Some(sd), Some(ci)) = (c.mean.last(), c.spread.last(), c.ci95.last()) {
                let _ = writeln!(
                    s,
                    "{},{},{m},{sd},{ci},{},{}",
                    r.label,
                    c.quantity.name(),
                    c.n,
                    r.flagged.len()
                );
            }
        }
    }
    s
}
