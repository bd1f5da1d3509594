//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Binary, Gradients, Tape, Unary, Var};
pub use tensor::{sigmoid, softplus, Tensor};

#[cfg(test)]
pub(crate) use tape::softmax_values;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected rank <= {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("shape {shape:?} does not match buffer of length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape {shape:?} has a zero-sized dimension")]
    EmptyDimension { shape: Vec<usize> },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("slice [{start}, {start}+{len}) out of range for shape {shape:?}")]
    SliceRange {
        start: usize,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: no inputs")]
    EmptyInput { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_annihilator() {
        let mut tape = Tape::new();
        let i = tape.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let a = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let z = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(m(&[&[5.0, 6.0, 7.0], &[8.0, 9.0, 1.0]]));
        let ia = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(ia), tape.value(a));
        let zb = tape.matmul(z, b).unwrap();
        assert_eq!(tape.value(zb).data(), &[0.0; 6]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let mut expected = [[0.0f64; 2]; 3];
        for (i, row) in expected.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for k in 0..4 {
                    *cell += a.get2(i, k) * b.get2(k, j);
                }
            }
        }
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let c = tape.matmul(va, vb).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((tape.value(c).get2(i, j) - expected[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn elementwise_basics() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let t = tape.tanh(z);
        let s = tape.sigmoid(z);
        assert_eq!(tape.value(t).item(), Some(0.0));
        assert_eq!(tape.value(s).item(), Some(0.5));
        let a = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(a, b).is_err());
        let k = tape.constant(Tensor::scalar(2.0));
        let ak = tape.add(a, k).unwrap();
        assert_eq!(tape.value(ak).data(), &[2.0; 4]);
    }

    #[test]
    fn sigmoid_extremes_against_reference() {
        for &x in &[50.0f64, -50.0] {
            let reference = 1.0 / (1.0 + (-x).exp());
            let got = sigmoid(x);
            assert!(got >= 1e-22 && got <= 1.0);
            assert!((got - reference).abs() <= 1e-15 * reference.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let s = tape.softmax(a, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

        let big = tape.constant(Tensor::from_vec(vec![1000.0; 3]));
        let s = tape.softmax(big, 0).unwrap();
        for &p in tape.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = tape.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let s = tape.softmax(x, 0).unwrap();
        let denom: f64 = (1..=3).map(|j| (j as f64).exp()).sum();
        for (j, &p) in tape.value(s).data().iter().enumerate() {
            assert!((p - ((j + 1) as f64).exp() / denom).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random(&mut rng, &[4, 7]).map(|x| 30.0 * x);
            let shifted = t.map(|x| x + 12.5);
            let a = softmax_values(&t, 1).unwrap();
            let b = softmax_values(&shifted, 1).unwrap();
            for r in 0..4 {
                let total: f64 = a.row(r).iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_shapes_and_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::ones(&[2, 3]));
        let only = tape.concat(&[a], 0).unwrap();
        assert_eq!(tape.value(only), tape.value(a));
        let b = tape.param(Tensor::full(&[2, 3], 2.0));
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.value(c).shape(), &[4, 3]);
        let bad = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(tape.concat(&[a, bad], 0).is_err());
        let s = tape.sum(c);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &Tensor::ones(&[2, 3]));
    }

    #[test]
    fn backward_examples_and_errors() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let l = tape.sum(sq);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
        assert_eq!(tape.backward(l).unwrap_err(), NumericsError::TapeConsumed);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.backward(x), Err(NumericsError::NonScalarLoss { .. })));
    }

    #[test]
    fn gradient_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = random(&mut rng, &[3, 3]);
        let w = random(&mut rng, &[3, 3]);
        let build = |tape: &mut Tape, x: Var, which: u8| -> Var {
            let wv = tape.constant(w.clone());
            let l1 = {
                let p = tape.matmul(x, wv).unwrap();
                let t = tape.tanh(p);
                tape.sum(t)
            };
            let l2 = {
                let e = tape.sigmoid(x);
                let q = tape.mul(e, x).unwrap();
                tape.sum(q)
            };
            match which {
                0 => tape.add(l1, l2).unwrap(),
                1 => l1,
                _ => l2,
            }
        };
        let grad = |which| {
            let mut tape = Tape::new();
            let x = tape.param(x0.clone());
            let l = build(&mut tape, x, which);
            tape.backward(l).unwrap().get(x).unwrap().clone()
        };
        let (both, a, b) = (grad(0), grad(1), grad(2));
        for i in 0..9 {
            assert!((both.data()[i] - a.data()[i] - b.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let w = Tensor::from_vec(vec![0.3, -1.2, 2.0]);
        let report = grad_check(
            |tape, v| {
                let wv = tape.constant(w.clone());
                let p = tape.mul(v[0], wv)?;
                Ok(tape.sum(p))
            },
            &[Tensor::from_vec(vec![1.0, 2.0, 3.0])],
            1e-5,
            1e-10,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-10, "{report:?}");
    }

    /// Every differentiable op over ten seeded instances.
    #[test]
    fn every_op_passes_grad_check() {
        type Build = fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>;
        let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
            ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let s = t.tanh(p);
                Ok(t.sum(s))
            }),
            ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| {
                let p = t.mul(v[0], v[1])?;
                Ok(t.sum(p))
            }),
            ("sub_scalar_broadcast", vec![vec![2, 3], vec![1]], |t, v| {
                let p = t.sub(v[0], v[1])?;
                let q = t.mul(p, p)?;
                Ok(t.sum(q))
            }),
            ("mul_scalar_left", vec![vec![1], vec![3, 2]], |t, v| {
                let p = t.mul(v[0], v[1])?;
                let q = t.tanh(p);
                Ok(t.sum(q))
            }),
            ("add_row", vec![vec![3, 2], vec![1, 2]], |t, v| {
                let p = t.add_row(v[0], v[1])?;
                let q = t.sigmoid(p);
                Ok(t.sum(q))
            }),
            ("mul_col", vec![vec![3, 2], vec![3, 1]], |t, v| {
                let p = t.mul_col(v[0], v[1])?;
                let q = t.tanh(p);
                Ok(t.sum(q))
            }),
            ("exp_softplus", vec![vec![4]], |t, v| {
                let e = t.exp(v[0]);
                let s = t.softplus(v[0]);
                let p = t.mul(e, s)?;
                Ok(t.sum(p))
            }),
            ("softmax_rows", vec![vec![2, 4], vec![2, 4]], |t, v| {
                let s = t.softmax(v[0], 1)?;
                let p = t.mul(s, v[1])?;
                Ok(t.sum(p))
            }),
            ("softmax_cols", vec![vec![3, 2], vec![3, 2]], |t, v| {
                let s = t.softmax(v[0], 0)?;
                let p = t.mul(s, v[1])?;
                Ok(t.sum(p))
            }),
            ("concat_slice", vec![vec![2, 3], vec![2, 2]], |t, v| {
                let c = t.concat(&[v[0], v[1]], 1)?;
                let s = t.slice(c, 1, 1, 3)?;
                let q = t.mul(s, s)?;
                let r = t.row_sum(q)?;
                let w = t.tanh(r);
                Ok(t.mean(w))
            }),
            ("composite", vec![vec![2, 3], vec![3, 4], vec![2, 4]], |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let h = t.tanh(p);
                let s = t.softmax(h, 1)?;
                let q = t.mul(s, v[2])?;
                let r = t.scale(q, 3.0);
                Ok(t.sum(r))
            }),
        ];
        for (name, shapes, f) in cases {
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
                let report = grad_check(f, &inputs, 1e-5, 1e-4).unwrap();
                assert!(report.passed(), "{name} seed {seed}: {report:?}");
            }
        }
    }

    #[test]
    fn leaf_gradient_shape_matches_value() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones(&[3, 2]));
        let y = tape.constant(Tensor::ones(&[2, 5]));
        let p = tape.matmul(x, y).unwrap();
        let l = tape.sum(p);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().shape(), &[3, 2]);
        assert!(g.get(y).is_none());
    }
}
