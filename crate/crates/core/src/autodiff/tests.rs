use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use super::*;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    let data = (0..r * c).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Matrix::from_vec(r, c, data).unwrap()
}

fn store_with(mats: &[(&str, Matrix)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, m) in mats {
        s.insert(*name, ParamGroup::Other, m.clone()).unwrap();
    }
    s
}

#[test]
fn matmul_with_identity_is_noop() {
    let mut tape = Tape::detached();
    let i = tape.constant(Matrix::identity(2)).unwrap();
    let x_val = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-4.0, 5.0, 0.5]]);
    let x = tape.constant(x_val.clone()).unwrap();
    let y = tape.matmul(i, x).unwrap();
    assert_eq!(tape.value(y), &x_val);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::detached();
    let a = tape.constant(Matrix::zeros(2, 3)).unwrap();
    let b = tape.constant(Matrix::zeros(2, 3)).unwrap();
    let err = tape.matmul(a, b).unwrap_err();
    assert!(err.to_string().contains("(2, 3) vs (2, 3)"), "{err}");
}

#[test]
fn mean_rows_divides_by_row_count() {
    let mut tape = Tape::detached();
    let x = tape
        .constant(Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]))
        .unwrap();
    let m = tape.mean_rows(x).unwrap();
    assert_eq!(tape.value(m), &Matrix::row_vector(&[2.0, 2.0]));
}

#[test]
fn concat_cols_backward_splits_at_boundary() {
    let mut tape = Tape::detached();
    let a = tape.leaf(Matrix::row_vector(&[1.0, 2.0])).unwrap();
    let b = tape.leaf(Matrix::row_vector(&[3.0, 4.0, 5.0])).unwrap();
    let c = tape.concat_cols(&[a, b]).unwrap();
    assert_eq!(tape.shape(c), (1, 5));
    let w = tape
        .constant(Matrix::row_vector(&[10.0, 20.0, 30.0, 40.0, 50.0]))
        .unwrap();
    let prod = tape.mul(c, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.leaf(a).unwrap().data(), &[10.0, 20.0]);
    assert_eq!(grads.leaf(b).unwrap().data(), &[30.0, 40.0, 50.0]);
}

#[test]
fn activations_on_known_points() {
    let mut tape = Tape::detached();
    let x = tape.constant(Matrix::row_vector(&[-1.0, 2.0])).unwrap();
    let y = tape.leaky_relu(x, 0.01).unwrap();
    assert_eq!(tape.value(y).data(), &[-0.01, 2.0]);

    let z = tape.constant(Matrix::scalar(0.0)).unwrap();
    let s = tape.sigmoid(z).unwrap();
    assert_eq!(tape.value(s).item(), 0.5);

    let zz = tape.constant(Matrix::row_vector(&[0.0, 0.0])).unwrap();
    let sm = tape.softmax_rows(zz).unwrap();
    assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);
}

#[test]
fn sigmoid_is_stable_at_extremes() {
    assert_eq!(stable_sigmoid(700.0), 1.0);
    assert!(stable_sigmoid(-700.0) > 0.0);
    assert!(stable_sigmoid(-700.0).is_finite());
    let mut tape = Tape::detached();
    let x = tape.constant(Matrix::row_vector(&[-700.0, 700.0])).unwrap();
    assert!(tape.sigmoid(x).is_ok());
}

#[test]
fn softmax_large_logits_match_shifted_closed_form() {
    let mut tape = Tape::detached();
    let x = tape.constant(Matrix::row_vector(&[1000.0, 1001.0])).unwrap();
    let y = tape.softmax_rows(x).unwrap();
    let e = (-1.0f64).exp();
    let expected = [e / (1.0 + e), 1.0 / (1.0 + e)];
    let got = tape.value(y).data();
    assert!((got[0] - expected[0]).abs() < 1e-15);
    assert!((got[1] - expected[1]).abs() < 1e-15);
    assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let m = random_matrix(&mut rng, 3, 5).scale(20.0);
        let shift = rng.gen_range(-50.0..50.0);
        let mut tape = Tape::detached();
        let x = tape.constant(m.clone()).unwrap();
        let xs = tape.constant(m.map(|v| v + shift)).unwrap();
        let y = tape.softmax_rows(x).unwrap();
        let ys = tape.softmax_rows(xs).unwrap();
        for r in 0..3 {
            let row = tape.value(y).row(r);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
        assert!(tape.value(y).max_abs_diff(tape.value(ys)) < 1e-12);
    }
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut tape = Tape::detached();
    let x = tape.constant(Matrix::scalar(f64::MAX)).unwrap();
    let err = tape.scale(x, 10.0).unwrap_err();
    assert!(matches!(err, AutodiffError::NonFinite { op: "scale" }));
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::detached();
    let x = tape.leaf(Matrix::zeros(2, 1)).unwrap();
    assert!(matches!(
        tape.backward(x),
        Err(AutodiffError::NonScalarLoss((2, 1)))
    ));
}

#[test]
fn linear_map_gradient_is_input_pattern() {
    // loss = sum(W x), dloss/dW_ij = x_j
    let store = store_with(&[("w", Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]))]);
    let w_id = store.id("w").unwrap();
    let mut tape = Tape::new(&store);
    let w = tape.param(w_id).unwrap();
    let x = tape.constant(Matrix::from_rows(&[vec![5.0], vec![-7.0]])).unwrap();
    let y = tape.matmul(w, x).unwrap();
    let loss = tape.sum(y).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.param(w_id).unwrap().data(), &[5.0, -7.0, 5.0, -7.0]);
}

#[test]
fn fan_out_gradients_accumulate() {
    let mut tape = Tape::detached();
    let x = tape.leaf(Matrix::scalar(3.0)).unwrap();
    let y = tape.add(x, x).unwrap();
    let grads = tape.backward(y).unwrap();
    assert_eq!(grads.leaf(x).unwrap().item(), 2.0);
}

#[test]
fn shared_param_is_one_node_with_summed_gradient() {
    let store = store_with(&[("w", Matrix::scalar(2.0))]);
    let id = store.id("w").unwrap();
    let mut tape = Tape::new(&store);
    let a = tape.param(id).unwrap();
    let b = tape.param(id).unwrap();
    assert_eq!(a, b);
    let y = tape.mul(a, b).unwrap();
    let grads = tape.backward(y).unwrap();
    assert_eq!(grads.param(id).unwrap().item(), 4.0);
}

#[test]
fn backward_visits_each_dag_node_once() {
    let mut tape = Tape::detached();
    let x = tape.leaf(Matrix::row_vector(&[0.3, -0.2])).unwrap();
    let a = tape.sigmoid(x).unwrap();
    let b = tape.leaky_relu(x, 0.01).unwrap();
    let c = tape.add(a, b).unwrap();
    let d = tape.mul(c, a).unwrap();
    let e = tape.add(d, b).unwrap();
    let loss = tape.sum(e).unwrap();
    let nodes = tape.len();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.visited, nodes);
}

#[test]
fn row_norm_output_has_zero_mean_unit_variance() {
    let mut tape = Tape::detached();
    let x = tape
        .constant(Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 6.0]]))
        .unwrap();
    let y = tape.row_norm(x, 0.0).unwrap();
    let row = tape.value(y).row(0);
    let mean = row.iter().sum::<f64>() / 4.0;
    let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-15);
    assert!((var - 1.0).abs() < 1e-12);
}

#[test]
fn bce_at_half_is_n_ln2() {
    let mut tape = Tape::detached();
    let p = tape.leaf(Matrix::row_vector(&[0.5; 4])).unwrap();
    let l = tape.bce(p, &[1.0, 0.0, 1.0, 1.0]).unwrap();
    assert!((tape.value(l).item() - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

/// Probe `out` with a fixed random weighting so the upstream gradient is dense.
fn probe<'t>(tape: &mut Tape<'t>, out: Var, rng: &mut ChaCha8Rng) -> Var {
    let (r, c) = tape.shape(out);
    let w = tape.constant(random_matrix(rng, r, c)).unwrap();
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

type OpBuilder = fn(&mut Tape<'_>, &[Var], usize, usize) -> Var;

fn check_op(name: &str, inputs: &[(usize, usize)], build: OpBuilder, seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.gen_range(1..=16);
        let n = rng.gen_range(1..=16);
        let resolve = |d: usize| match d {
            0 => m,
            1 => n,
            other => other - 1,
        };
        let mut store = ParamStore::new();
        for (i, &(r, c)) in inputs.iter().enumerate() {
            let mat = random_matrix(&mut rng, resolve(r), resolve(c));
            store
                .insert(format!("in{i}"), ParamGroup::Other, mat)
                .unwrap();
        }
        let probe_seed = rng.gen::<u64>();
        let report = grad_check(
            &mut store,
            |tape: &mut Tape<'_>| -> Result<Var, AutodiffError> {
                let vars: Vec<Var> = (0..inputs.len())
                    .map(|i| tape.param(ParamId(i)).unwrap())
                    .collect();
                let out = build(tape, &vars, m, n);
                let mut prng = ChaCha8Rng::seed_from_u64(probe_seed);
                Ok(probe(tape, out, &mut prng))
            },
            GradCheckConfig::default(),
            |_| true,
        )
        .unwrap();
        assert!(
            report.passed(),
            "{name} seed {seed} ({m}x{n}): {:?}",
            &report.failures[..report.failures.len().min(3)]
        );
    }
}

// Dimension codes: 0 = m, 1 = n, k >= 2 = literal k - 1.
#[test]
fn every_op_matches_finite_differences() {
    const SEEDS: u64 = 20;
    check_op("matmul", &[(0, 1), (1, 0)], |t, v, _, _| t.matmul(v[0], v[1]).unwrap(), SEEDS);
    check_op("transpose", &[(0, 1)], |t, v, _, _| t.transpose(v[0]).unwrap(), SEEDS);
    check_op("add", &[(0, 1), (0, 1)], |t, v, _, _| t.add(v[0], v[1]).unwrap(), SEEDS);
    check_op("sub", &[(0, 1), (0, 1)], |t, v, _, _| t.sub(v[0], v[1]).unwrap(), SEEDS);
    check_op("mul", &[(0, 1), (0, 1)], |t, v, _, _| t.mul(v[0], v[1]).unwrap(), SEEDS);
    check_op(
        "add_bias_row",
        &[(0, 1), (2, 1)],
        |t, v, _, _| t.add_bias_row(v[0], v[1]).unwrap(),
        SEEDS,
    );
    check_op("scale", &[(0, 1)], |t, v, _, _| t.scale(v[0], -2.5).unwrap(), SEEDS);
    check_op(
        "mul_scalar",
        &[(2, 2), (0, 1)],
        |t, v, _, _| t.mul_scalar(v[0], v[1]).unwrap(),
        SEEDS,
    );
    check_op(
        "concat_cols",
        &[(0, 1), (0, 4)],
        |t, v, _, _| t.concat_cols(&[v[0], v[1]]).unwrap(),
        SEEDS,
    );
    check_op(
        "concat_rows",
        &[(0, 1), (3, 1)],
        |t, v, _, _| t.concat_rows(&[v[0], v[1]]).unwrap(),
        SEEDS,
    );
    check_op("mean_rows", &[(0, 1)], |t, v, _, _| t.mean_rows(v[0]).unwrap(), SEEDS);
    check_op(
        "slice_rows",
        &[(0, 1)],
        |t, v, m, _| t.slice_rows(v[0], m / 2, m - m / 2).unwrap(),
        SEEDS,
    );
    check_op(
        "slice_cols",
        &[(0, 1)],
        |t, v, _, n| t.slice_cols(v[0], n / 3, n - n / 3).unwrap(),
        SEEDS,
    );
    check_op("leaky_relu", &[(0, 1)], |t, v, _, _| t.leaky_relu(v[0], 0.01).unwrap(), SEEDS);
    check_op("sigmoid", &[(0, 1)], |t, v, _, _| t.sigmoid(v[0]).unwrap(), SEEDS);
    check_op("softmax_rows", &[(0, 1)], |t, v, _, _| t.softmax_rows(v[0]).unwrap(), SEEDS);
    check_op("row_norm", &[(0, 1)], |t, v, _, _| t.row_norm(v[0], 1e-5).unwrap(), SEEDS);
    check_op(
        "propagate_dense",
        &[(0, 1)],
        |t, v, m, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let op = Arc::new(LinearOperator::Dense(random_matrix(&mut rng, m + 1, m)));
            t.propagate(op, v[0]).unwrap()
        },
        SEEDS,
    );
    check_op(
        "propagate_sparse",
        &[(0, 1)],
        |t, v, m, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let dense = random_matrix(&mut rng, m, m).map(|x| if x > 0.5 { x } else { 0.0 });
            let op = Arc::new(LinearOperator::Sparse(CsrMatrix::from_dense(&dense)));
            t.propagate(op, v[0]).unwrap()
        },
        SEEDS,
    );
    check_op(
        "bce",
        &[(2, 1)],
        |t, v, _, n| {
            let p = t.sigmoid(v[0]).unwrap();
            let targets: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            t.bce(p, &targets).unwrap()
        },
        SEEDS,
    );
}

#[test]
fn gather_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    store
        .insert("table", ParamGroup::Encoder, random_matrix(&mut rng, 6, 4))
        .unwrap();
    let report = grad_check(
        &mut store,
        |tape: &mut Tape<'_>| -> Result<Var, AutodiffError> {
            let g = tape.gather(ParamId(0), &[2, 0, 2, 5])?;
            let mut prng = ChaCha8Rng::seed_from_u64(11);
            Ok(probe(tape, g, &mut prng))
        },
        GradCheckConfig::default(),
        |_| true,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.failures);
}

fn sigmoid_matmul_check(store: &mut ParamStore) -> GradCheckReport {
    grad_check(
        store,
        |tape: &mut Tape<'_>| -> Result<Var, AutodiffError> {
            let w = tape.param(ParamId(0))?;
            let x = tape.param(ParamId(1))?;
            let h = tape.matmul(x, w)?;
            let a = tape.leaky_relu(h, 0.01)?;
            let s = tape.sigmoid(a)?;
            tape.sum(s)
        },
        GradCheckConfig::default(),
        |_| true,
    )
    .unwrap()
}

#[test]
fn grad_check_passes_on_sigmoid_of_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = store_with(&[
        ("w", random_matrix(&mut rng, 4, 3)),
        ("x", random_matrix(&mut rng, 5, 4)),
    ]);
    let before = store.value(ParamId(0)).clone();
    let report = sigmoid_matmul_check(&mut store);
    assert!(report.passed());
    assert!(report.max_rel_error < 1e-4);
    assert_eq!(report.checked, 12 + 20);
    assert_eq!(store.value(ParamId(0)), &before);
}

#[test]
fn grad_check_catches_corrupted_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = store_with(&[
        ("w", random_matrix(&mut rng, 4, 3)),
        ("x", random_matrix(&mut rng, 5, 4)),
    ]);
    tape::corrupt::LEAKY_SLOPE.with(|c| c.set(true));
    let report = sigmoid_matmul_check(&mut store);
    tape::corrupt::LEAKY_SLOPE.with(|c| c.set(false));
    assert!(!report.passed());
    assert!(report.failures.iter().any(|f| f.param == "w"));
}

#[test]
fn detached_tape_cannot_read_params() {
    let mut tape = Tape::detached();
    assert!(matches!(
        tape.param(ParamId(0)),
        Err(AutodiffError::DetachedTape)
    ));
}
