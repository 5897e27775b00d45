use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng;

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn randn(seed: u64, shape: &[usize]) -> Tensor {
    let mut r = rng::stream(seed, 0);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

#[test]
fn mse_of_identical_is_zero() {
    let tape = Tape::new();
    let x = tape.param(randn(1, &[4, 3]));
    let loss = x.mse(x).unwrap();
    assert_eq!(loss.item(), 0.0);
}

#[test]
fn tanh_at_zero() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(0.0));
    let y = x.tanh().unwrap();
    assert_eq!(y.item(), 0.0);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).item(), 1.0);
}

#[test]
fn matmul_matches_hand_product() {
    let tape = Tape::new();
    let a = tape.constant(t2(&[&[1., 2., 3.], &[4., 5., 6.]]));
    let b = tape.constant(t2(&[&[7., 8.], &[9., 10.], &[11., 12.]]));
    let c = a.matmul(b).unwrap().value();
    assert_eq!(c.shape(), &[2, 2]);
    assert_eq!(c.data(), &[58., 64., 139., 154.]);
}

#[test]
fn batched_matmul_matches_per_batch_product() {
    let a = randn(2, &[3, 2, 4]);
    let b = randn(3, &[3, 4, 5]);
    let tape = Tape::new();
    let c = tape
        .constant(a.clone())
        .matmul(tape.constant(b.clone()))
        .unwrap()
        .value();
    for bi in 0..3 {
        for i in 0..2 {
            for j in 0..5 {
                let want: f64 = (0..4)
                    .map(|k| a.data()[bi * 8 + i * 4 + k] * b.data()[bi * 20 + k * 5 + j])
                    .sum();
                assert!((c.data()[bi * 10 + i * 5 + j] - want).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn sum_gradient_is_ones() {
    let tape = Tape::new();
    let w = tape.param(randn(4, &[3, 2]));
    let g = tape.backward(w.sum().unwrap()).unwrap();
    assert_eq!(g.wrt(w), Tensor::full(&[3, 2], 1.0));
}

#[test]
fn scalar_regression_gradient() {
    let (w0, x0, y0) = (1.5, 2.0, 1.0);
    let tape = Tape::new();
    let w = tape.param(Tensor::new(vec![1, 1], vec![w0]).unwrap());
    let x = tape.constant(Tensor::new(vec![1, 1], vec![x0]).unwrap());
    let y = tape.constant(Tensor::new(vec![1, 1], vec![y0]).unwrap());
    let loss = w.matmul(x).unwrap().mse(y).unwrap();
    let g = tape.backward(loss).unwrap().wrt(w).item();
    assert_eq!(g, 2.0 * x0 * (w0 * x0 - y0));
}

#[test]
fn disconnected_parameter_has_zero_gradient() {
    let tape = Tape::new();
    let used = tape.param(randn(5, &[2]));
    let unused = tape.param(randn(6, &[3]));
    let g = tape.backward(used.sum().unwrap()).unwrap();
    assert!(g.get(unused).is_none());
    assert_eq!(g.wrt(unused), Tensor::zeros(&[3]));
}

#[test]
fn backward_twice_is_an_error() {
    let tape = Tape::new();
    let w = tape.param(randn(7, &[2]));
    let loss = w.sum().unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.backward(loss).unwrap_err(), AdError::TapeConsumed);
}

#[test]
fn non_scalar_loss_rejected() {
    let tape = Tape::new();
    let w = tape.param(randn(8, &[2, 2]));
    assert!(matches!(tape.backward(w), Err(AdError::NotScalar { .. })));
}

#[test]
fn shape_errors_carry_both_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match a.matmul(b) {
        Err(AdError::Shape { op, lhs, rhs }) => {
            assert_eq!(op, "matmul");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_finite_names_the_op() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::scalar(1000.0));
    assert_eq!(a.exp().unwrap_err(), AdError::NonFinite { op: "exp" });
}

#[test]
fn softmax_rows_sum_to_one() {
    let x = randn(9, &[2, 5, 7]);
    for axis in 0..3 {
        let tape = Tape::new();
        let y = tape.constant(x.clone()).softmax(axis).unwrap().value();
        let shape = y.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        for o in 0..outer {
            for j in 0..inner {
                let s: f64 = (0..shape[axis])
                    .map(|i| y.data()[(o * shape[axis] + i) * inner + j])
                    .sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn polynomial_grad_check() {
    let p = randn(10, &[6]);
    let err = grad_check(
        |x| {
            let x2 = x.mul(x)?;
            let x3 = x2.mul(x)?;
            x3.affine(0.5, 0.0)?.sub(x2.scale(2.0)?)?.add(x)?.sum()
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn constant_function_has_zero_gradients() {
    let p = randn(11, &[4]);
    let err = grad_check(|x| x.scale(0.0)?.sum(), &p, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn tanh_mlp_width_8_grad_check() {
    let mut r = rng::stream(12, 0);
    let mut params = ParamSet::new();
    params.insert("w0", glorot_uniform(&mut r, 3, 8));
    params.insert("b0", randn(13, &[8]));
    params.insert("w1", glorot_uniform(&mut r, 8, 8));
    params.insert("b1", randn(14, &[8]));
    params.insert("w2", glorot_uniform(&mut r, 8, 2));
    let x = randn(15, &[5, 3]);
    let y = randn(16, &[5, 2]);
    let err = grad_check_params(
        |tape, p| {
            let h = tape
                .constant(x.clone())
                .matmul(p.get("w0")?)?
                .add_row(p.get("b0")?)?
                .tanh()?;
            let h = h.matmul(p.get("w1")?)?.add_row(p.get("b1")?)?.tanh()?;
            h.matmul(p.get("w2")?)?.mse(tape.constant(y.clone()))
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn structural_ops_grad_check() {
    let mut params = ParamSet::new();
    params.insert("a", randn(20, &[2, 3, 4]));
    params.insert("b", randn(21, &[2, 4, 3]));
    params.insert("c", randn(22, &[2, 3, 2]));
    let weights = randn(23, &[2, 3, 5]);
    let err = grad_check_params(
        |tape, p| {
            let ab = p.get("a")?.matmul(p.get("b")?)?; // 2x3x3
            let t = ab.transpose()?.softmax(2)?;
            let cat = Var::concat(&[t, p.get("c")?], 2)?; // 2x3x5
            let w = tape.constant(weights.clone());
            let s = cat.mul(w)?.slice(2, 1, 4)?; // 2x3x3
            let m = s.mean_axis(1)?; // 2x3
            let r = m.reshape(&[3, 2])?.normalize_rows()?;
            let sq = r.mul(r)?.affine(1.0, 1.0)?.sqrt()?;
            sq.div(r.affine(0.1, 2.0)?)?.mean()
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn standardize_and_activations_grad_check() {
    let mut params = ParamSet::new();
    params.insert("x", randn(30, &[6, 3]));
    let target = randn(31, &[6, 3]);
    let err = grad_check_params(
        |tape, p| {
            let z = p.get("x")?.standardize_cols()?;
            let a = z.sigmoid()?.add(z.exp()?.scale(0.1)?)?;
            a.mse(tape.constant(target.clone()))
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn relu_gradient_away_from_kink() {
    let tape = Tape::new();
    let x = tape.param(Tensor::new(vec![4], vec![-1.0, -0.5, 0.5, 2.0]).unwrap());
    let g = tape.backward(x.relu().unwrap().sum().unwrap()).unwrap();
    assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn adam_zero_gradient_is_identity() {
    let mut params = ParamSet::new();
    params.insert("w", randn(40, &[3, 3]));
    let before = params.clone();
    let mut adam = AdamState::default();
    let grads = [("w".to_string(), Tensor::zeros(&[3, 3]))]
        .into_iter()
        .collect();
    for _ in 0..5 {
        adam.step(&mut params, &grads).unwrap();
    }
    assert_eq!(params, before);
}

#[test]
fn adam_decay_compounds() {
    let mut adam = AdamState::default();
    for _ in 0..3 {
        adam.decay_epoch();
    }
    assert!((adam.lr - 1e-3 * 0.95f64.powi(3)).abs() < 1e-18);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut params = ParamSet::new();
    params.insert("w", Tensor::scalar(0.3));
    let mut adam = AdamState::default();
    let grads = [("w".to_string(), Tensor::scalar(1.0))]
        .into_iter()
        .collect();
    adam.step(&mut params, &grads).unwrap();
    let delta = 0.3 - params.get("w").unwrap().item();
    // mhat = vhat = 1 at t = 1, so the step is lr / (1 + eps).
    assert!((delta - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
}

#[test]
fn adam_shape_mismatch() {
    let mut params = ParamSet::new();
    params.insert("w", Tensor::zeros(&[2]));
    let grads = [("w".to_string(), Tensor::zeros(&[3]))]
        .into_iter()
        .collect();
    assert!(matches!(
        AdamState::default().step(&mut params, &grads),
        Err(AdError::Shape { .. })
    ));
}

/// Builds a random small graph (depth <= 4, widths <= 8) from `seed` and
/// returns its parameters together with a closure evaluating it.
fn random_graph(seed: u64) -> (ParamSet, Vec<(u8, usize)>, Tensor) {
    let mut r = rng::stream(seed, 1);
    let depth = r.random_range(1..=4);
    let batch = r.random_range(1..=4);
    let mut width = r.random_range(1..=8);
    let input = randn(seed ^ 0xabc, &[batch, width]);
    let mut params = ParamSet::new();
    let mut layers = Vec::new();
    for l in 0..depth {
        let next = r.random_range(1..=8);
        params.insert(
            format!("w{l}"),
            randn(seed + 100 + l as u64, &[width, next]),
        );
        params.insert(format!("b{l}"), randn(seed + 200 + l as u64, &[next]));
        layers.push((r.random_range(0..5u8), next));
        width = next;
    }
    (params, layers, input)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_graphs_pass_grad_check(seed in any::<u64>()) {
        let (params, layers, input) = random_graph(seed);
        let err = grad_check_params(
            |tape, p| {
                let mut h = tape.constant(input.clone());
                for (l, &(kind, _)) in layers.iter().enumerate() {
                    let pre = h.matmul(p.get(&format!("w{l}"))?)?.add_row(p.get(&format!("b{l}"))?)?;
                    h = match kind {
                        0 => pre.tanh()?,
                        1 => pre.sigmoid()?,
                        2 => pre.softmax(1)?,
                        3 => pre.mul(pre)?.affine(0.5, 0.0)?,
                        _ => pre.scale(0.3)?.exp()?,
                    };
                }
                h.mean()
            },
            &params,
            1e-5,
        )
        .unwrap();
        prop_assert!(err < 1e-5, "seed {seed}: {err}");
    }

    #[test]
    fn softmax_normalizes(seed in any::<u64>(), n in 1usize..10) {
        let x = randn(seed, &[3, n]).map(|v| 20.0 * v);
        let tape = Tape::new();
        let y = tape.constant(x).softmax(1).unwrap().value();
        for i in 0..3 {
            let s: f64 = y.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
