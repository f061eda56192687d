use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lbno::dataset;
use tempfile::TempDir;

fn lbno(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbno"))
        .current_dir(cwd)
        .env_remove("LBNO_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small_sim_config(dir: &Path, steps: usize) -> PathBuf {
    let path = dir.join("sim.json");
    fs::write(
        &path,
        format!(
            r#"{{
  "seed": 5,
  "simulate": {{
    "extents": [16, 16],
    "solver": {{"tau": 0.6}},
    "initial": {{"type": "random_vortices", "u0": 0.05, "max_wavenumber": 2}},
    "steps": {steps},
    "stride": 5
  }}
}}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn verify_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let out = lbno(tmp.path(), &["verify"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("solver.conservation") && text.contains("invariants hold"));
}

#[test]
fn zero_steps_give_an_empty_trajectory_with_a_valid_header() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim_config(tmp.path(), 100);
    ok(&lbno(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "run", "simulate", "--steps", "0"]));
    let (traj, model, extents) = dataset::load_trajectory(&tmp.path().join("run/trajectory.lbnt")).unwrap();
    assert!(traj.is_empty());
    assert_eq!((model, extents), (lbno::LatticeModel::D2Q9, vec![16, 16]));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/trajectory.json")).unwrap()).unwrap();
    assert_eq!(sidecar["snapshots"], 0);
    assert_eq!(sidecar["seed"], 5);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim_config(tmp.path(), 40);
    let c = cfg.to_str().unwrap();
    ok(&lbno(tmp.path(), &["--config", c, "--out", "a", "--threads", "1", "simulate"]));
    ok(&lbno(tmp.path(), &["--config", c, "--out", "b", "--threads", "1", "simulate"]));
    ok(&lbno(tmp.path(), &["--config", c, "--out", "c", "--seed", "6", "simulate"]));
    let read = |d: &str| fs::read(tmp.path().join(d).join("trajectory.lbnt")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn bundled_von_karman_config_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("vonkarman-desk.json");
    ok(&lbno(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "vk", "simulate"]));
    let (traj, _, extents) = dataset::load_trajectory(&tmp.path().join("vk/trajectory.lbnt")).unwrap();
    assert_eq!(extents, vec![64, 64]);
    assert_eq!(traj.len(), 80);
    assert!(traj.snapshots.iter().all(|f| f.is_finite()));
}

#[test]
fn exit_codes_follow_error_classes() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "unknown": true}"#).unwrap();
    let out = lbno(tmp.path(), &["--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = lbno(tmp.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2), "missing simulate section is a config error");

    let corrupt = tmp.path().join("corrupt.lbnt");
    fs::write(&corrupt, b"LBNT\x01\x00\x00\x00garbage").unwrap();
    let out = lbno(tmp.path(), &["make-dataset", "--trajectory", corrupt.to_str().unwrap(), "--jump", "5"]);
    assert_eq!(out.status.code(), Some(5));

    let unstable = tmp.path().join("unstable.json");
    fs::write(
        &unstable,
        r#"{"simulate": {"extents": [16, 16], "solver": {"tau": 0.5001},
            "initial": {"type": "random_perturbation", "amplitude": 1.5, "mean_velocity": [0.5, 0.4]},
            "steps": 5000, "stride": 100}}"#,
    )
    .unwrap();
    let out = lbno(tmp.path(), &["--config", unstable.to_str().unwrap(), "--out", "u", "simulate"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("step"), "{stderr}");
}

#[test]
fn pipeline_from_simulation_to_evaluation() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim_config(tmp.path(), 100);
    let c = cfg.to_str().unwrap();
    for (seed, dir) in [("1", "t1"), ("2", "t2"), ("3", "t3")] {
        ok(&lbno(tmp.path(), &["--config", c, "--seed", seed, "--out", dir, "simulate"]));
    }
    ok(&lbno(
        tmp.path(),
        &[
            "--out", "data", "make-dataset", "--trajectory", "t1/trajectory.lbnt", "--trajectory", "t2/trajectory.lbnt",
            "--jump", "10",
        ],
    ));
    for part in ["train", "val", "test"] {
        assert!(tmp.path().join(format!("data/{part}.lbno")).exists());
    }
    let model = tmp.path().join("model.json");
    fs::write(
        &model,
        r#"{"model": {"lattice": "D2Q9", "extents": [16, 16], "width": 4, "layers": 2, "modes": 3, "activation": "gelu"},
            "training": {"epochs": 2, "batch_size": 4}}"#,
    )
    .unwrap();
    let m = model.to_str().unwrap();
    let w = configs().join("weights");
    for (name, weights) in [("mse", "mse-only.json"), ("phys", "mse-phys.json")] {
        let wp = w.join(weights);
        ok(&lbno(
            tmp.path(),
            &["--config", m, "--threads", "1", "--out", name, "train", "--data", "data", "--weights", wp.to_str().unwrap()],
        ));
    }
    let a = fs::read(tmp.path().join("mse/model.lbnc")).unwrap();
    let b = fs::read(tmp.path().join("phys/model.lbnc")).unwrap();
    assert_ne!(dataset::hex_digest(&a), dataset::hex_digest(&b));

    ok(&lbno(
        tmp.path(),
        &["--out", "roll", "rollout", "--checkpoint", "mse/model.lbnc", "--trajectory", "t3/trajectory.lbnt", "--steps", "3"],
    ));
    let (pred, _, _) = dataset::load_trajectory(&tmp.path().join("roll/rollout.lbnt")).unwrap();
    assert_eq!(pred.times, vec![1, 2, 3]);

    ok(&lbno(
        tmp.path(),
        &[
            "--out", "eval", "evaluate", "--checkpoint", "mse/model.lbnc", "--checkpoint", "phys/model.lbnc",
            "--trajectory", "t3/trajectory.lbnt", "--test", "data/test.lbno", "--steps", "5", "--label", "small",
        ],
    ));
    let csv = fs::read_to_string(tmp.path().join("eval/ensemble.csv")).unwrap();
    assert!(csv.starts_with("label,quantity,step,t_star,mean,spread,ci95,n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("eval/evaluation.json")).unwrap()).unwrap();
    assert_eq!(summary["models"].as_array().unwrap().len(), 2);
    assert!(summary["models"][0]["single_jump"]["velocity"].as_f64().unwrap().is_finite());

    let mut top: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["data", "eval", "model.json", "mse", "phys", "roll", "sim.json", "t1", "t2", "t3"]);
}

#[test]
fn training_is_deterministic_on_one_thread() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_sim_config(tmp.path(), 60);
    ok(&lbno(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "t", "simulate"]));
    ok(&lbno(tmp.path(), &["--out", "d", "make-dataset", "--trajectory", "t/trajectory.lbnt", "--jump", "5"]));
    let model = tmp.path().join("m.json");
    fs::write(
        &model,
        r#"{"seed": 3, "model": {"lattice": "D2Q9", "extents": [16, 16], "width": 4, "layers": 1, "modes": 2, "activation": "gelu"},
            "training": {"epochs": 2}}"#,
    )
    .unwrap();
    for dir in ["r1", "r2"] {
        ok(&lbno(
            tmp.path(),
            &["--config", model.to_str().unwrap(), "--threads", "1", "--out", dir, "train", "--data", "d"],
        ));
    }
    assert_eq!(
        fs::read(tmp.path().join("r1/model.lbnc")).unwrap(),
        fs::read(tmp.path().join("r2/model.lbnc")).unwrap()
    );
}
