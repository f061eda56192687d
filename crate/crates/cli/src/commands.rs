use std::fs;
use std::path::{Path, PathBuf};

use lbno::dataset::{self, config_hash, Dtype, KineticDataset, Provenance, SplitTag};
use lbno::eval::{self, Quantity, RunOutcome};
use lbno::neuralop::{self, init_model, TrainConfig};
use lbno::scenario;
use lbno::{verify, Error, Result, Solver, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, DatasetConfig, EvalConfig, RunConfig};

/// Output directory shared by every subcommand. All files go below it.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, serde_json::to_string_pretty(value)?)?;
        Ok(p)
    }
}

pub struct SimulateArgs {
    pub steps: Option<usize>,
    pub stride: Option<usize>,
    pub warmup: Option<usize>,
}

pub fn simulate(cfg: &RunConfig, seed: u64, args: &SimulateArgs, out: &Out) -> Result<()> {
    let mut sim = cfg
        .simulate
        .clone()
        .ok_or_else(|| Error::config("simulate needs a \"simulate\" section in the config"))?;
    sim.steps = args.steps.unwrap_or(sim.steps);
    sim.stride = args.stride.unwrap_or(sim.stride);
    sim.warmup = args.warmup.unwrap_or(sim.warmup);
    sim.validate()?;
    let mut solver = Solver::new(sim.lattice, &sim.extents, sim.solver.clone())?;
    let f0 = sim.initial.build(&solver, sim.lattice, &sim.extents, seed)?;
    let mut traj = solver.run(&f0, sim.steps, sim.stride, sim.warmup)?;
    traj.provenance = Provenance {
        config_hash: config_hash(&sim)?,
        seed: Some(seed),
        note: "simulate".into(),
    };
    let path = out.path("trajectory.lbnt");
    dataset::save_trajectory(&traj, sim.lattice, &sim.extents, &path)?;
    out.json(
        "trajectory.json",
        &json!({
            "file": "trajectory.lbnt",
            "seed": seed,
            "config_hash": traj.provenance.config_hash,
            "config": sim,
            "snapshots": traj.len(),
            "times": traj.times,
        }),
    )?;
    println!("wrote {} ({} snapshots)", path.display(), traj.len());
    Ok(())
}

fn write_splits(ds: &KineticDataset, dcfg: &DatasetConfig, seed: u64, out: &Out) -> Result<serde_json::Value> {
    let (train, val, test) = dataset::split(ds, dcfg.split, seed)?;
    let dtype = if dcfg.f32 { Dtype::F32 } else { Dtype::F64 };
    let mut files = serde_json::Map::new();
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let file = format!("{name}.lbno");
        if part.is_empty() {
            continue;
        }
        dataset::save_with_dtype(part, &out.path(&file), dtype)?;
        files.insert(name.into(), json!({"file": file, "samples": part.len()}));
    }
    Ok(json!({
        "jump": ds.jump,
        "extents": ds.extents,
        "samples": ds.len(),
        "split": dcfg.split,
        "split_seed": seed,
        "provenance": ds.provenance,
        "parts": files,
    }))
}

pub struct DatasetArgs {
    pub trajectories: Vec<PathBuf>,
    pub jump: Option<u64>,
}

/// Jump pairs from trajectory files, or from the vortex scenario when no
/// files are given (its rollout trajectories are written alongside).
pub fn make_dataset(cfg: &RunConfig, seed: u64, args: &DatasetArgs, out: &Out) -> Result<()> {
    if args.trajectories.is_empty() {
        let mut sc = cfg.scenario.clone().unwrap_or_default();
        sc.seed = cfg.seed.map_or(sc.seed, |_| seed);
        if let Some(j) = args.jump {
            sc.jump = j;
        }
        let dcfg = DatasetConfig {
            jump: sc.jump,
            ..cfg.dataset.clone().unwrap_or(DatasetConfig {
                jump: sc.jump,
                split: scenario::DESK_SPLIT,
                f32: false,
            })
        };
        let data = sc.build()?;
        let mut summary = write_splits(&data.dataset, &dcfg, sc.seed, out)?;
        let mut rollouts = Vec::new();
        for (k, traj) in data.rollouts.iter().enumerate() {
            let file = format!("rollout-{k}.lbnt");
            dataset::save_trajectory(traj, data.dataset.model, &data.dataset.extents, &out.path(&file))?;
            rollouts.push(file);
        }
        summary["scenario"] = serde_json::to_value(&sc)?;
        summary["rollouts"] = json!(rollouts);
        out.json("dataset.json", &summary)?;
        println!("wrote {} samples and {} rollout trajectories to {}", data.dataset.len(), rollouts.len(), out.dir.display());
        return Ok(());
    }
    let base = cfg.dataset.clone();
    let jump = args
        .jump
        .or(base.as_ref().map(|d| d.jump))
        .ok_or_else(|| Error::config("make-dataset needs --jump or a \"dataset\" section"))?;
    let dcfg = DatasetConfig {
        jump,
        ..base.unwrap_or(DatasetConfig {
            jump,
            split: scenario::DESK_SPLIT,
            f32: false,
        })
    };
    dcfg.validate()?;
    let mut trajs: Vec<Trajectory> = Vec::new();
    let mut shape = None;
    for p in &args.trajectories {
        let (t, model, extents) = dataset::load_trajectory(p)?;
        match &shape {
            None => shape = Some((model, extents)),
            Some(s) if *s != (model, extents.clone()) => {
                return Err(Error::shape(format!("{} has a different lattice or grid", p.display())))
            }
            _ => {}
        }
        trajs.push(t);
    }
    let mut ds = dataset::generate_many(&trajs, dcfg.jump)?;
    let hashes: Vec<&str> = trajs.iter().map(|t| t.provenance.config_hash.as_str()).collect();
    ds.provenance = Provenance {
        config_hash: config_hash(&(&hashes, &dcfg))?,
        seed: Some(seed),
        note: format!("{} trajectories", trajs.len()),
    };
    let summary = write_splits(&ds, &dcfg, seed, out)?;
    out.json("dataset.json", &summary)?;
    println!("wrote {} samples to {}", ds.len(), out.dir.display());
    Ok(())
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub weights: Option<PathBuf>,
    pub epochs: Option<usize>,
}

pub fn train(cfg: &RunConfig, seed: u64, args: &TrainArgs, out: &Out) -> Result<()> {
    let train_ds = dataset::load(&args.data.join("train.lbno"))?;
    let val_path = args.data.join("val.lbno");
    let val_ds = if val_path.exists() {
        dataset::load(&val_path)?
    } else {
        KineticDataset {
            model: train_ds.model,
            extents: train_ds.extents.clone(),
            jump: train_ds.jump,
            samples: Vec::new(),
            provenance: Provenance::default(),
            split: Some(SplitTag::Val),
        }
    };
    let model_cfg = cfg
        .model
        .clone()
        .unwrap_or_else(|| scenario::desk_operator(&train_ds.extents));
    let mut tcfg: TrainConfig = cfg.training.clone().unwrap_or_default();
    tcfg.seed = seed;
    if let Some(e) = args.epochs {
        tcfg.epochs = e;
    }
    if let Some(p) = &args.weights {
        tcfg.weights = config::load_weights(p)?;
    }
    tcfg.validate()?;
    let model = init_model(&model_cfg, seed)?;
    let (model, report) = neuralop::train(&model, &train_ds, &val_ds, &tcfg)?;
    neuralop::save_checkpoint(&model, &out.path("model.lbnc"))?;
    out.json(
        "train_report.json",
        &json!({ "training": tcfg, "model": model_cfg, "report": report }),
    )?;
    if let Some(epoch) = report.diverged_at {
        return Err(Error::numeric(format!(
            "training diverged at epoch {epoch}; best parameters so far were saved"
        )));
    }
    println!(
        "best epoch {} with validation velocity error {:.4}; wrote {}",
        report.best_epoch,
        report.best_score,
        out.path("model.lbnc").display()
    );
    Ok(())
}

pub struct RolloutArgs {
    pub checkpoint: PathBuf,
    pub trajectory: PathBuf,
    pub steps: Option<usize>,
}

pub fn rollout(cfg: &RunConfig, args: &RolloutArgs, out: &Out) -> Result<()> {
    let model = neuralop::load_checkpoint(&args.checkpoint)?;
    let (traj, lattice, extents) = dataset::load_trajectory(&args.trajectory)?;
    let f0 = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::config("trajectory has no snapshots"))?;
    let steps = args
        .steps
        .unwrap_or(cfg.eval.clone().unwrap_or_default().rollout_steps);
    let pred = neuralop::rollout(&model, f0, steps)?;
    dataset::save_trajectory(&pred, lattice, &extents, &out.path("rollout.lbnt"))?;
    println!("wrote {} predicted snapshots to {}", pred.len(), out.path("rollout.lbnt").display());
    Ok(())
}

pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    pub trajectories: Vec<PathBuf>,
    pub test: Option<PathBuf>,
    pub jump: Option<u64>,
    pub steps: Option<usize>,
    pub label: String,
}

/// Per-checkpoint rollout errors averaged over the reference trajectories.
fn checkpoint_outcome(
    model: &lbno::SpectralOperatorModel,
    refs: &[Trajectory],
    jump: u64,
    steps: usize,
) -> Result<eval::RolloutErrors> {
    let runs: Vec<eval::RolloutErrors> = refs
        .iter()
        .map(|t| eval::evaluate_model_rollout(model, t, jump, Some(steps)))
        .collect::<Result<_>>()?;
    let n = runs.iter().map(|r| r.steps.len()).min().unwrap_or(0);
    let mean = |q: Quantity| -> Result<Vec<f64>> {
        eval::mean_curves(&runs.iter().map(|r| r.curve(q)[..n].to_vec()).collect::<Vec<_>>())
    };
    Ok(eval::RolloutErrors {
        steps: runs[0].steps[..n].to_vec(),
        t_star: runs[0].t_star[..n].to_vec(),
        velocity: mean(Quantity::Velocity)?,
        density: mean(Quantity::Density)?,
        population: mean(Quantity::Population)?,
        diverged_at: runs.iter().filter_map(|r| r.diverged_at).min(),
    })
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs, out: &Out) -> Result<()> {
    if args.checkpoints.is_empty() {
        return Err(Error::config("evaluate needs at least one --checkpoint"));
    }
    let steps = args.steps.unwrap_or(cfg.eval.clone().unwrap_or_else(EvalConfig::default).rollout_steps);
    let refs: Vec<Trajectory> = args
        .trajectories
        .iter()
        .map(|p| dataset::load_trajectory(p).map(|t| t.0))
        .collect::<Result<_>>()?;
    let test = args.test.as_deref().map(dataset::load).transpose()?;
    let mut per_model = Vec::new();
    let mut outcomes = Vec::new();
    for path in &args.checkpoints {
        let model = neuralop::load_checkpoint(path)?;
        let single = match &test {
            Some(ds) => Some(json!({
                "velocity": eval::single_jump_error(&model, ds, Quantity::Velocity)?,
                "density": eval::single_jump_error(&model, ds, Quantity::Density)?,
                "population": eval::single_jump_error(&model, ds, Quantity::Population)?,
            })),
            None => None,
        };
        let rollout = if refs.is_empty() {
            None
        } else {
            let jump = args
                .jump
                .or(test.as_ref().map(|d| d.jump))
                .or(cfg.dataset.as_ref().map(|d| d.jump))
                .ok_or_else(|| Error::config("rollout evaluation needs --jump, --test or a \"dataset\" section"))?;
            let outcome = match checkpoint_outcome(&model, &refs, jump, steps) {
                Ok(e) => RunOutcome {
                    seed: model.seed,
                    errors: Some(e),
                    failure: None,
                },
                Err(e) => RunOutcome {
                    seed: model.seed,
                    errors: None,
                    failure: Some(e.to_string()),
                },
            };
            outcomes.push(outcome.clone());
            Some(outcome)
        };
        per_model.push(json!({
            "checkpoint": path,
            "seed": model.seed,
            "single_jump": single,
            "rollout": rollout,
        }));
    }
    let mut summary = json!({ "label": args.label, "models": per_model });
    if outcomes.len() >= 2 {
        let report = eval::ensemble_report(&args.label, &outcomes)?;
        report.write_csv(&out.path("ensemble.csv"))?;
        report.write_json(&out.path("ensemble.json"))?;
        summary["final_velocity"] = json!(report.final_velocity());
        println!(
            "{}: final velocity error {:.4} over {} seeds ({} flagged)",
            args.label,
            report.final_velocity().unwrap_or(f64::NAN),
            report.seeds.len(),
            report.flagged.len()
        );
    }
    out.json("evaluation.json", &summary)?;
    println!("wrote {}", out.path("evaluation.json").display());
    Ok(())
}

pub fn verify_all() -> Result<()> {
    let outcomes = verify::run_battery(|o| {
        println!(
            "[{}] {} ({:.2} s): {}",
            if o.passed { "ok" } else { "FAILED" },
            o.name,
            o.seconds,
            o.detail
        );
    })?;
    println!("all {} invariants hold", outcomes.len());
    Ok(())
}

