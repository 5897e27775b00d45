use nalgebra::{DMatrix, DVector};

use super::*;
use crate::autodiff::{grad_check_params, Tensor};
use crate::dynsys::{
    NormalizationStats, Split, SystemId, SystemSpec, Trajectory, TrajectorySet, WindowRef,
};

/// Hopf-shaped (d = 2) dataset with identity normalization.
pub(crate) fn toy_set(
    steps: usize,
    n: usize,
    f: impl Fn(usize, usize, usize) -> f64,
) -> TrajectorySet {
    let make = |offset: usize| -> Vec<Trajectory> {
        (0..n)
            .map(|j| {
                let rows: Vec<Vec<f64>> = (0..steps)
                    .map(|t| (0..2).map(|c| f(offset + j, t, c)).collect())
                    .collect();
                Trajectory::from_rows(&rows, 0.0, 0.05, rows[0].clone())
            })
            .collect()
    };
    TrajectorySet {
        system: SystemSpec::new(SystemId::Hopf, 0).with_shape(n, steps),
        norm: NormalizationStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
        },
        train: make(0),
        val: make(n),
        test: make(2 * n),
        skew: None,
    }
}

pub(crate) fn wave_set() -> TrajectorySet {
    toy_set(60, 2, |j, t, c| {
        (0.3 * t as f64 + j as f64 + c as f64 * 1.3).sin()
    })
}

pub(crate) fn toy_spec(label: &str) -> ForecasterSpec {
    let mut s = ForecasterSpec::from_label(label).unwrap();
    s.dim = 2;
    s.input_len = 4;
    s.horizon = 3;
    s.latent_dim = 3;
    s.width = 5;
    s.depth = 2;
    s.d_model = 4;
    s.heads = 2;
    s.layers = 1;
    s.reservoir_size = 6;
    s.dt = 0.05;
    s.batch_size = 8;
    s
}

fn window(seed: f64) -> DMatrix<f64> {
    DMatrix::from_fn(4, 2, |i, j| (seed + i as f64 * 0.7 - j as f64).sin())
}

#[test]
fn zero_weight_mlp_encoder_returns_last_bias() {
    let spec = toy_spec("MLP");
    let mut m = Forecaster::init(&spec).unwrap();
    let names: Vec<String> = m
        .params
        .names()
        .filter(|n| n.starts_with("enc."))
        .cloned()
        .collect();
    for n in names {
        let t = m.params.get_mut(&n).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    m.params.insert(
        "enc.out.b",
        Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap(),
    );
    for s in [0.0, 3.0, 7.5] {
        assert_eq!(m.encode(&window(s)).unwrap().as_slice(), &[0.5, -1.0, 2.0]);
    }
}

#[test]
fn encoding_is_deterministic() {
    for label in ["MLP", "RNN", "TF", "ESN"] {
        let spec = toy_spec(label);
        let a = Forecaster::init(&spec).unwrap();
        let b = Forecaster::init(&spec).unwrap();
        assert_eq!(a, b);
        let w = window(1.0);
        assert_eq!(a.encode(&w).unwrap(), a.encode(&w).unwrap());
        assert_eq!(a.encode(&w).unwrap(), b.encode(&w).unwrap());
    }
    let other = Forecaster::init(&toy_spec("MLP").with_seed(9)).unwrap();
    assert_ne!(other, Forecaster::init(&toy_spec("MLP")).unwrap());
}

#[test]
fn gru_encoder_maps_zero_window_to_zero() {
    for label in ["RNN", "A-RNN"] {
        let m = Forecaster::init(&toy_spec(label)).unwrap();
        let z = m.encode(&DMatrix::zeros(4, 2)).unwrap();
        assert!(z.iter().all(|v| *v == 0.0), "{z}");
    }
}

#[test]
fn encode_rejects_wrong_window_shape() {
    let m = Forecaster::init(&toy_spec("MLP")).unwrap();
    assert!(matches!(
        m.encode(&DMatrix::zeros(5, 2)),
        Err(ModelError::Shape(_))
    ));
    assert!(matches!(
        m.decode(&DVector::zeros(7)),
        Err(ModelError::Shape(_))
    ));
}

#[test]
fn identity_koopman_and_zero_field_propagators_fix_z() {
    let z0 = DVector::from_vec(vec![0.3, -1.2, 2.0]);
    let m = Forecaster::init(&toy_spec("MLP")).unwrap();
    assert_eq!(m.propagate(&z0).unwrap(), z0);

    let mut k = Forecaster::init(&toy_spec("K-MLP")).unwrap();
    k.params.insert(
        "prop.k",
        Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }),
    );
    assert_eq!(k.propagate(&z0).unwrap(), z0);

    let mut n = Forecaster::init(&toy_spec("N-MLP")).unwrap();
    for name in ["prop.f1.w", "prop.f1.b", "prop.f2.w", "prop.f2.b"] {
        n.params
            .get_mut(name)
            .unwrap()
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    assert_eq!(n.propagate(&z0).unwrap(), z0);
}

#[test]
fn koopman_with_zero_horizon_is_identity() {
    let mut m = Forecaster::init(&toy_spec("K-MLP")).unwrap();
    m.spec.horizon = 0;
    let z0 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    assert_eq!(m.propagate(&z0).unwrap(), z0);
}

#[test]
fn koopman_applies_k_h_times() {
    let m = Forecaster::init(&toy_spec("K-MLP")).unwrap();
    let k = m.params.get("prop.k").unwrap();
    let k = DMatrix::from_row_slice(3, 3, k.data());
    let z0 = DVector::from_vec(vec![0.2, -0.4, 1.0]);
    let want = &k * &k * &k * &z0;
    let got = m.propagate(&z0).unwrap();
    assert!((got - want).amax() < 1e-12);
}

#[test]
fn node_refinement_changes_little() {
    let spec = toy_spec("N-MLP");
    let coarse = Forecaster::init(&spec).unwrap();
    let mut fine = coarse.clone();
    fine.spec.node_steps = 2 * spec.horizon;
    let z0 = DVector::from_vec(vec![0.5, -0.5, 1.0]);
    let gap = (coarse.propagate(&z0).unwrap() - fine.propagate(&z0).unwrap()).amax();
    assert!(gap < 1e-4, "{gap}");
}

#[test]
fn zero_weight_heads_tile_their_bias() {
    for label in ["RNN", "A-RNN", "TF"] {
        let mut m = Forecaster::init(&toy_spec(label)).unwrap();
        m.params
            .get_mut("dec.out.w")
            .unwrap()
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        m.params
            .insert("dec.out.b", Tensor::new(vec![2], vec![0.25, -3.0]).unwrap());
        let out = m.decode(&DVector::from_vec(vec![1.0, -1.0, 0.5])).unwrap();
        for i in 0..3 {
            assert_eq!((out[(i, 0)], out[(i, 1)]), (0.25, -3.0), "{label}");
        }
    }
}

#[test]
fn composition_matches_full_forward() {
    for label in ["MLP", "K-MLP", "N-MLP", "RNN", "A-RNN", "TF", "N-TF", "ESN"] {
        let m = Forecaster::init(&toy_spec(label)).unwrap();
        let w = window(2.0);
        let staged = m
            .decode(&m.propagate(&m.encode(&w).unwrap()).unwrap())
            .unwrap();
        let x = Tensor::new(vec![1, 8], crate::linalg::to_row_major(&w)).unwrap();
        let full = m.predict_batch(&x).unwrap();
        assert_eq!(crate::linalg::to_row_major(&staged), full.data(), "{label}");
        assert_eq!(staged, m.forecast(&w).unwrap());
    }
}

#[test]
fn every_trainable_family_passes_grad_check() {
    let set = wave_set();
    let refs: Vec<WindowRef> = set.window_refs(Split::Train, 4, 3, 7).unwrap();
    let (x, y) = batch_tensors(&set, Split::Train, &refs[..4], 4, 3).unwrap();
    for label in [
        "MLP", "K-MLP", "N-MLP", "RNN", "A-RNN", "K-RNN", "TF", "K-TF", "N-TF",
    ] {
        let m = Forecaster::init(&toy_spec(label)).unwrap();
        let err = grad_check_params(
            |tape, b| {
                let xv = tape.constant(x.clone());
                let yv = tape.constant(y.clone());
                let pred = m
                    .forward_graph(b, tape, xv, Some(yv))
                    .map_err(|e| match e {
                        ModelError::Ad(a) => a,
                        other => panic!("{other}"),
                    })?;
                pred.mse(yv)
            },
            &m.params,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "{label}: {err}");
    }
}

#[test]
fn mlp_learns_a_constant_signal() {
    let set = toy_set(40, 2, |_, _, c| if c == 0 { 0.7 } else { -0.4 });
    let mut spec = toy_spec("MLP");
    spec.epochs = 50;
    spec.batch_size = 4;
    spec.lr = 1e-2;
    let ckpt = train(&spec, &set).unwrap();
    assert!(ckpt.best_val_mse < 1e-6, "{}", ckpt.best_val_mse);
    assert!(ckpt.epochs_run() <= 50);
}

#[test]
fn teacher_forcing_on_and_off_agree_on_constant_signal() {
    let set = toy_set(40, 2, |_, _, c| if c == 0 { 0.5 } else { -0.25 });
    let mut spec = toy_spec("A-RNN");
    spec.epochs = 80;
    spec.batch_size = 4;
    spec.lr = 1e-2;
    let on = train(&spec, &set).unwrap();
    spec.teacher_forcing = false;
    let off = train(&spec, &set).unwrap();
    let w = DMatrix::from_fn(4, 2, |_, c| if c == 0 { 0.5 } else { -0.25 });
    let (a, b) = (
        on.model.forecast(&w).unwrap(),
        off.model.forecast(&w).unwrap(),
    );
    assert!((a - b).amax() < 1e-2);
    assert!(on.best_val_mse < 1e-4 && off.best_val_mse < 1e-4);
}

#[test]
fn zero_patience_stops_at_first_stall() {
    let set = wave_set();
    let mut spec = toy_spec("MLP");
    spec.patience = 0;
    spec.epochs = 500;
    spec.lr = 0.05;
    let ckpt = train(&spec, &set).unwrap();
    let log = &ckpt.train_log;
    let n = log.len();
    assert!(n < 500);
    for w in log[..n - 1].windows(2) {
        assert!(w[1].val_mse < w[0].val_mse);
    }
    if n >= 2 {
        assert!(log[n - 1].val_mse >= log[n - 2].val_mse);
    }
    let best = log.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(ckpt.best_val_mse, best);
}

#[test]
fn training_is_reproducible_and_logs_decay() {
    let set = wave_set();
    let mut spec = toy_spec("RNN");
    spec.epochs = 3;
    let a = train(&spec, &set).unwrap();
    let b = train(&spec, &set).unwrap();
    assert_eq!(a.train_log, b.train_log);
    assert_eq!(a.model, b.model);
    assert!((a.train_log[2].lr - 1e-3 * 0.95 * 0.95).abs() < 1e-15);
}

#[test]
fn huge_data_diverges() {
    let set = toy_set(20, 1, |_, t, _| 1e200 * (1.0 + t as f64));
    let mut spec = toy_spec("MLP");
    spec.epochs = 2;
    assert!(matches!(
        train(&spec, &set),
        Err(ModelError::Diverged { epoch: 0 })
    ));
}

#[test]
fn checkpoint_round_trip_reproduces_val_mse() {
    let set = wave_set();
    let mut spec = toy_spec("TF");
    spec.epochs = 2;
    let ckpt = train(&spec, &set).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tf.json");
    ckpt.save(&path).unwrap();
    let back = ForecasterCheckpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    assert!(back.trained_on(&set));
    let val = mean_mse(&back.model, &set, Split::Val, back.model.spec.eval_stride).unwrap();
    assert_eq!(val.to_bits(), ckpt.best_val_mse.to_bits());
    assert_eq!(
        evaluate(&back, &set, Split::Test).unwrap(),
        evaluate(&ckpt, &set, Split::Test).unwrap()
    );
}

#[test]
fn checkpoint_rejects_unknown_version() {
    let set = wave_set();
    let ckpt = train(&toy_spec("ESN"), &set).unwrap();
    let json = ckpt
        .to_json()
        .unwrap()
        .replacen("\"format_version\":1", "\"format_version\":99", 1);
    assert!(matches!(
        ForecasterCheckpoint::from_json(&json),
        Err(ModelError::Format(_))
    ));
}

#[test]
fn esn_ridge_limits() {
    let set = wave_set();
    let mut spec = toy_spec("ESN");
    spec.ridge_lambda = 1e30;
    let ckpt = train(&spec, &set).unwrap();
    let (x, _) = batch_tensors(
        &set,
        Split::Test,
        &set.window_refs(Split::Test, 4, 3, 1).unwrap(),
        4,
        3,
    )
    .unwrap();
    assert!(ckpt.model.predict_batch(&x).unwrap().max_abs() < 1e-20);

    // More reservoir units than training windows: the Gram matrix is rank deficient.
    spec.ridge_lambda = 0.0;
    spec.reservoir_size = 200;
    assert_eq!(
        esn_fit(&spec, &set).unwrap_err(),
        ModelError::SingularSystem
    );
}

#[test]
fn esn_readout_solves_normal_equations() {
    let set = wave_set();
    let mut spec = toy_spec("ESN");
    spec.ridge_lambda = 1e-3;
    let ckpt = esn_fit(&spec, &set).unwrap();
    let refs = set.window_refs(Split::Train, 4, 3, 1).unwrap();
    let (x, y) = batch_tensors(&set, Split::Train, &refs, 4, 3).unwrap();
    let r = reservoir_states(&ckpt.model, &x).unwrap();
    let n = spec.reservoir_size;
    let g = DMatrix::from_fn(
        refs.len(),
        n + 1,
        |i, j| if j == n { 1.0 } else { r.at(i, j) },
    );
    let yt = DMatrix::from_row_slice(refs.len(), 6, y.data());
    let w_out = ckpt.model.params.get("esn.out.w").unwrap();
    let b_out = ckpt.model.params.get("esn.out.b").unwrap();
    let w = DMatrix::from_fn(n + 1, 6, |i, j| {
        if i == n {
            b_out.data()[j]
        } else {
            w_out.at(i, j)
        }
    });
    let lhs = (g.tr_mul(&g) + DMatrix::identity(n + 1, n + 1) * 1e-3) * w;
    let rhs = g.tr_mul(&yt);
    assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
}

#[test]
fn latents_follow_sample_order() {
    let set = wave_set();
    let ckpt = train(&toy_spec("ESN"), &set).unwrap();
    let refs = set.window_refs(Split::Test, 4, 3, 5).unwrap();
    let one = collect_latents(&ckpt, &set, Split::Test, &refs[..1]).unwrap();
    assert_eq!((one.n(), one.k()), (1, 6));

    let fwd = collect_latents(&ckpt, &set, Split::Test, &refs).unwrap();
    let rev: Vec<WindowRef> = refs.iter().rev().copied().collect();
    let bwd = collect_latents(&ckpt, &set, Split::Test, &rev).unwrap();
    let n = refs.len();
    for i in 0..n {
        assert_eq!(fwd.z.row(i), bwd.z.row(n - 1 - i));
    }
    assert_eq!(fwd.forecaster_id, "ESN#0");

    let bad = [WindowRef {
        traj_id: 0,
        start_index: 59,
    }];
    assert!(matches!(
        collect_latents(&ckpt, &set, Split::Test, &bad),
        Err(ModelError::Index { .. })
    ));
    let bad = [WindowRef {
        traj_id: 7,
        start_index: 0,
    }];
    assert!(matches!(
        collect_latents(&ckpt, &set, Split::Test, &bad),
        Err(ModelError::Index { .. })
    ));
}

#[test]
fn true_system_latent_is_flattened_window() {
    let set = wave_set();
    let refs = set.window_refs(Split::Val, 4, 3, 10).unwrap();
    let lat = true_system_latents(&set, Split::Val, &refs, 4, 3).unwrap();
    assert_eq!(lat.k(), 8);
    assert_eq!(lat.forecaster_id, TRUE_SYSTEM_ID);
    for (i, r) in refs.iter().enumerate() {
        let w = set.window(Split::Val, *r, 4, 3).unwrap();
        assert_eq!(
            lat.z.row(i).iter().copied().collect::<Vec<_>>(),
            crate::linalg::to_row_major(&w.input)
        );
    }
    let now = current_states(&set, Split::Val, &refs, 4, 3).unwrap();
    assert_eq!(now.shape(), (refs.len(), 2));
    let w = set.window(Split::Val, refs[1], 4, 3).unwrap();
    assert_eq!(now.row(1), w.input.row(3));
}

#[test]
fn evaluation_metrics_are_ordered() {
    let set = wave_set();
    let ckpt = train(&toy_spec("ESN"), &set).unwrap();
    let r = evaluate(&ckpt, &set, Split::Test).unwrap();
    assert!(r.mse >= 0.0 && r.mae >= 0.0);
    assert!(r.mae <= r.rmse + 1e-15);
    for (m, a) in r.per_step_mse.iter().zip(&r.per_step_mae) {
        assert!(*a <= m.sqrt() + 1e-15);
    }
}
