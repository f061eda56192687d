use lbno::dataset::{self, Dtype};
use lbno::eval::{self, Quantity};
use lbno::neuralop::{self, init_model, Activation, LossWeights, OperatorConfig, TrainConfig};
use lbno::solver::{self, init};
use lbno::symmetry::{apply_group_action, apply_to_scalar, apply_to_vector};
use lbno::{moments, symmetry_group, DistributionField, LatticeModel, SolverConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model(n: usize, seed: u64) -> lbno::SpectralOperatorModel {
    let cfg = OperatorConfig {
        lattice: LatticeModel::D2Q9,
        extents: vec![n, n],
        width: 4,
        layers: 2,
        modes: 3,
        activation: Activation::Gelu,
    };
    init_model(&cfg, seed).unwrap()
}

fn trajectory(n: usize, seed: u64, steps: usize, stride: usize) -> lbno::Trajectory {
    let f0 = init::random_vortices(&[n, n], seed, 0.05, 2).unwrap();
    solver::run(&f0, &SolverConfig::periodic(2, 0.6), steps, stride).unwrap()
}

#[test]
fn first_rollout_step_equals_single_jump_error() {
    let traj = trajectory(16, 1, 60, 5);
    let model = small_model(16, 2);
    let ds = dataset::generate(&traj, 10).unwrap();
    let first = dataset::KineticDataset {
        samples: vec![ds.samples[0].clone()],
        ..ds.clone()
    };
    let roll = eval::evaluate_model_rollout(&model, &traj, 10, Some(3)).unwrap();
    for q in [Quantity::Velocity, Quantity::Density, Quantity::Population] {
        let single = eval::single_jump_error(&model, &first, q).unwrap();
        assert_eq!(roll.curve(q)[0], single, "{q:?}");
    }
    assert_eq!(roll.steps, vec![1, 2, 3]);
}

#[test]
fn dataset_from_saved_trajectory_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let traj = trajectory(12, 3, 40, 4);
    let path = dir.path().join("t.lbnt");
    dataset::save_trajectory(&traj, LatticeModel::D2Q9, &[12, 12], &path).unwrap();
    let (back, _, _) = dataset::load_trajectory(&path).unwrap();
    let a = dataset::generate(&traj, 8).unwrap();
    let b = dataset::generate(&back, 8).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.input.data(), y.input.data());
        assert_eq!(x.target.data(), y.target.data());
        assert_eq!((x.t_in, x.jump), (y.t_in, y.jump));
    }
    let bytes = dataset::encode(&a, Dtype::F32).unwrap();
    let c = dataset::decode(&bytes).unwrap();
    let worst = a
        .samples
        .iter()
        .zip(&c.samples)
        .map(|(x, y)| x.input.max_abs_diff(&y.input))
        .fold(0.0, f64::max);
    assert!(worst < 1e-7);
}

#[test]
fn trained_checkpoint_reproduces_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let traj = trajectory(16, 4, 80, 5);
    let ds = dataset::generate(&traj, 10).unwrap();
    let (train, val, _) = dataset::split(&ds, (0.8, 0.1, 0.1), 0).unwrap();
    let tc = TrainConfig {
        epochs: 2,
        weights: LossWeights::default(),
        ..TrainConfig::default()
    };
    let (model, report) = neuralop::train(&small_model(16, 5), &train, &val, &tc).unwrap();
    assert_eq!(report.epochs.len(), 2);
    let path = dir.path().join("m.lbnc");
    neuralop::save_checkpoint(&model, &path).unwrap();
    let loaded = neuralop::load_checkpoint(&path).unwrap();
    let f = &val.samples[0].input;
    assert_eq!(model.forward(f).unwrap().data(), loaded.forward(f).unwrap().data());
    let roll_a = neuralop::rollout(&model, f, 3).unwrap();
    let roll_b = neuralop::rollout(&loaded, f, 3).unwrap();
    for (x, y) in roll_a.snapshots.iter().zip(&roll_b.snapshots) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn mse_and_physics_runs_see_the_same_batches() {
    let traj = trajectory(12, 6, 60, 5);
    let ds = dataset::generate(&traj, 10).unwrap();
    let model = small_model(12, 7);
    let tc = |weights| TrainConfig {
        epochs: 1,
        lr: 0.0,
        weights,
        ..TrainConfig::default()
    };
    let empty = dataset::KineticDataset {
        samples: vec![],
        ..ds.clone()
    };
    let (_, a) = neuralop::train(&model, &ds, &empty, &tc(LossWeights::mse_only())).unwrap();
    let (_, b) = neuralop::train(&model, &ds, &empty, &tc(LossWeights::default())).unwrap();
    // With a frozen model the data terms depend only on the batch order.
    assert_eq!(a.epochs[0].train.mse, b.epochs[0].train.mse);
    assert_eq!(a.epochs[0].train.mom0, b.epochs[0].train.mom0);
    assert_eq!(a.epochs[0].train.equiv, 0.0);
    assert!(b.epochs[0].train.equiv > 0.0);
}

fn random_field(n: usize, seed: u64) -> DistributionField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = DistributionField::zeros(LatticeModel::D2Q9, &[n, n]).unwrap();
    f.data_mut().iter_mut().for_each(|v| *v = rng.gen::<f64>());
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn moments_transform_with_the_field(seed in any::<u64>(), element in 0usize..8, n in 2usize..9) {
        let group = symmetry_group(LatticeModel::D2Q9);
        let e = group.element(element);
        let f = random_field(n, seed);
        let rf = apply_group_action(e, &f).unwrap();
        let rho = apply_to_scalar(e, f.grid(), &moments::density(&f)).unwrap();
        let mom = apply_to_vector(e, f.grid(), &moments::momentum(&f)).unwrap();
        let (rho_r, mom_r) = (moments::density(&rf), moments::momentum(&rf));
        for x in 0..f.cells() {
            prop_assert!((rho[x] - rho_r[x]).abs() < 1e-14);
            for a in 0..2 {
                prop_assert!((mom[a][x] - mom_r[a][x]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn relative_error_of_a_scaled_field(seed in any::<u64>(), s in 0.5f64..2.0) {
        let f = random_field(6, seed);
        let mut g = f.clone();
        g.scale(s);
        let e = eval::field_error(&g, &f, Quantity::Population).unwrap();
        prop_assert!((e - (s - 1.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn operator_commutes_with_periodic_shifts(seed in 0u64..50, dx in 0usize..8, dy in 0usize..8) {
        let model = small_model(8, seed);
        let f = random_field(8, seed + 1);
        let shift = |g: &DistributionField| {
            let mut out = g.clone();
            for i in 0..9 {
                for x in 0..8 {
                    for y in 0..8 {
                        out.set(i, ((x + dx) % 8) * 8 + (y + dy) % 8, g.get(i, x * 8 + y));
                    }
                }
            }
            out
        };
        let a = model.forward(&shift(&f)).unwrap();
        let b = shift(&model.forward(&f).unwrap());
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }
}
