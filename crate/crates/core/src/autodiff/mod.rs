//! Tape-based reverse-mode differentiation over dense `f64` arrays.
//!
//! Operations are recorded on a [`Tape`] as they execute. After a scalar
//! loss is computed, [`Tape::backward`] sweeps the tape once in reverse and
//! leaves d(loss)/d(node) in every node's gradient buffer.

mod check;
mod tape;
mod tensor;

pub use check::{finite_diff_check, relative_error, GradReport, ParamCheck, ParamSet, REL_ERR_FLOOR};
pub use tape::{sigmoid, softmax, DiffArray, ElementwiseKind, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Builds the graph with leaves for `params`, returns (loss value, grads).
    fn eval_with_grads(
        params: &Vec<Tensor>,
        build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    ) -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss).unwrap();
        let grads = params
            .iter()
            .zip(&vars)
            .map(|(p, v)| Tensor::from_vec(p.shape(), tape.grad(*v).to_vec()).unwrap())
            .collect();
        (tape.value(loss)[0], grads)
    }

    fn check_graph(params: Vec<Tensor>, build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> GradReport {
        let (_, grads) = eval_with_grads(&params, build);
        let mut params = params;
        finite_diff_check(
            &mut params,
            &grads,
            |p| {
                let mut tape = Tape::new();
                let vars: Vec<Var> = p.iter().map(|t| tape.leaf(t.clone())).collect();
                let loss = build(&mut tape, &vars);
                Ok(tape.value(loss)[0])
            },
            1e-5,
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn matmul_identity_and_selector() {
        let mut tape = Tape::new();
        let eye = tape.leaf(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let m = tape.leaf(Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let out = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(out), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(tape.shape(out), &[2, 2]);

        let sel = tape.leaf(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let col = tape.leaf(Tensor::matrix(&[vec![5.0], vec![7.0]]).unwrap());
        let out = tape.matmul(sel, col).unwrap();
        assert_eq!(tape.value(out), &[5.0, 0.0]);
        assert_eq!(tape.shape(out), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[4, 2])];
        let weights = random_tensor(&mut rng, &[3, 2]);
        let report = check_graph(params, &move |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            let w = t.leaf(weights.clone());
            let y = t.mul(c, w).unwrap();
            t.sum(y)
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn matvec_and_vecmat_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = vec![
            random_tensor(&mut rng, &[3, 4]),
            random_tensor(&mut rng, &[4]),
            random_tensor(&mut rng, &[3]),
        ];
        let report = check_graph(params, &|t, v| {
            let mv = t.matmul(v[0], v[1]).unwrap();
            assert_eq!(t.shape(mv), &[3]);
            let vm = t.matmul(v[2], v[0]).unwrap();
            assert_eq!(t.shape(vm), &[4]);
            let a = t.tanh(mv);
            let b = t.sigmoid(vm);
            let sa = t.sum(a);
            let sb = t.dot(b, b).unwrap();
            t.add(sa, sb).unwrap()
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(&[3]));
        let t = tape.elementwise(ElementwiseKind::Tanh, z, None).unwrap();
        assert_eq!(tape.value(t), &[0.0, 0.0, 0.0]);
        let s0 = tape.leaf(Tensor::scalar(0.0));
        let s = tape.elementwise(ElementwiseKind::Sigmoid, s0, None).unwrap();
        assert_eq!(tape.value(s), &[0.5]);
        let a = tape.leaf(Tensor::vector(vec![2.0, 3.0]));
        let b = tape.leaf(Tensor::vector(vec![4.0, 5.0]));
        let m = tape.elementwise(ElementwiseKind::Mul, a, Some(b)).unwrap();
        assert_eq!(tape.value(m), &[8.0, 15.0]);
        assert!(tape.elementwise(ElementwiseKind::Add, a, None).is_err());
        let c = tape.leaf(Tensor::vector(vec![1.0]));
        assert!(matches!(
            tape.elementwise(ElementwiseKind::Sub, a, Some(c)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn elementwise_gradients_match_central_differences() {
        let params = vec![Tensor::vector(vec![2.0, 3.0]), Tensor::vector(vec![4.0, 5.0])];
        let report = check_graph(params, &|t, v| {
            let m = t.mul(v[0], v[1]).unwrap();
            let d = t.sub(m, v[0]).unwrap();
            let s = t.add(d, v[1]).unwrap();
            let s = t.scale(s, 0.1);
            let th = t.tanh(s);
            let sg = t.sigmoid(th);
            t.sum(sg)
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn softmax_examples() {
        let cases: [(Vec<f64>, Vec<f64>); 3] = [
            (vec![0.0, 0.0, 0.0], vec![1.0 / 3.0; 3]),
            (vec![1000.0, 1000.0], vec![0.5, 0.5]),
            (vec![1f64.ln(), 3f64.ln()], vec![0.25, 0.75]),
        ];
        for (input, expected) in cases {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::vector(input));
            let y = tape.softmax(x).unwrap();
            for (a, b) in tape.value(y).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, f64::NAN]));
        assert!(matches!(tape.softmax(x), Err(Error::NonFinite(_))));
        let x = tape.leaf(Tensor::vector(vec![f64::INFINITY, 0.0]));
        assert!(matches!(tape.softmax(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        let params = vec![Tensor::vector(vec![0.3, -1.2, 2.0])];
        let report = check_graph(params.clone(), &|t, v| t.softmax_cross_entropy(v[0], 2).unwrap());
        assert!(report.max_rel_err() < 1e-4, "{report:?}");
        // softmax followed by an explicit log-likelihood agrees with the fused op
        let report = check_graph(params, &|t, v| {
            let p = t.softmax(v[0]).unwrap();
            let w = t.leaf(Tensor::vector(vec![0.2, 0.5, -0.7]));
            t.dot(p, w).unwrap()
        });
        assert!(report.max_rel_err() < 1e-4, "{report:?}");
    }

    #[test]
    fn concat_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::vector(vec![3.0]));
        let c = tape.concat(a, b, 0).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0]);
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a), &[1.0, 1.0]);
        assert_eq!(tape.grad(b), &[1.0]);

        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 2]));
        let c = tape.concat(a, b, 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 5]);
        assert!(tape.concat(a, b, 0).is_err());
    }

    #[test]
    fn concat_axis1_routes_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = vec![random_tensor(&mut rng, &[2, 3]), random_tensor(&mut rng, &[2, 2])];
        let w = random_tensor(&mut rng, &[2, 5]);
        let report = check_graph(params, &move |t, v| {
            let c = t.concat(v[0], v[1], 1).unwrap();
            let w = t.leaf(w.clone());
            t.dot(c, w).unwrap()
        });
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn backward_closed_forms() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        tape.backward(sq).unwrap();
        assert_eq!(tape.grad(x), &[6.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[4]));
        let t = tape.tanh(x);
        let s = tape.sum(t);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), &[1.0; 4]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_double_backward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.tanh(x);
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::GradientsNotCleared)));
        tape.zero_grad();
        assert!(tape.grad(x).iter().all(|&g| g == 0.0));
        tape.backward(s).unwrap();
    }

    #[test]
    fn fresh_arrays_have_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = tape.sigmoid(x);
        for v in [x, y] {
            let arr = tape.array(v);
            assert_eq!(arr.values().len(), arr.grad().len());
            assert!(arr.grad().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn finite_diff_sum_of_squares() {
        let mut params = vec![Tensor::vector(vec![1.0, 2.0])];
        let analytic = vec![Tensor::vector(vec![2.0, 4.0])];
        let report = finite_diff_check(
            &mut params,
            &analytic,
            |p| Ok(p[0].data().iter().map(|x| x * x).sum()),
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-8, "{report:?}");
        assert!(report.passed());
        assert_eq!(params[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn finite_diff_rejects_bad_step_and_non_finite() {
        let mut params = vec![Tensor::vector(vec![1.0])];
        let g = params.clone();
        assert!(finite_diff_check(&mut params, &g, |_| Ok(0.0), 0.0, 1e-4).is_err());
        assert!(matches!(
            finite_diff_check(&mut params, &g, |_| Ok(f64::NAN), 1e-5, 1e-4),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn corrupted_backward_rule_fails_check() {
        let params = vec![Tensor::vector(vec![0.4, -0.3, 1.1])];
        // derivative of tanh deliberately wrong: 1 - y instead of 1 - y^2
        let build = |t: &mut Tape, v: &[Var]| {
            let y = t.map(v[0], f64::tanh, |x| 1.0 - x.tanh());
            t.sum(y)
        };
        let report = check_graph(params.clone(), &build);
        assert!(!report.passed());
        let honest = |t: &mut Tape, v: &[Var]| {
            let y = t.map(v[0], f64::tanh, |x| 1.0 - x.tanh().powi(2));
            t.sum(y)
        };
        assert!(check_graph(params, &honest).passed());
    }

    #[test]
    fn repeated_backward_after_zero_grad_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tape = Tape::new();
        let a = tape.leaf(random_tensor(&mut rng, &[3, 3]));
        let x = tape.leaf(random_tensor(&mut rng, &[3]));
        let h = tape.matmul(a, x).unwrap();
        let h = tape.tanh(h);
        let p = tape.softmax(h).unwrap();
        let loss = tape.dot(p, h).unwrap();
        tape.backward(loss).unwrap();
        let first: Vec<f64> = tape.grad(a).iter().chain(tape.grad(x)).copied().collect();
        tape.zero_grad();
        tape.backward(loss).unwrap();
        let second: Vec<f64> = tape.grad(a).iter().chain(tape.grad(x)).copied().collect();
        assert_eq!(first, second);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = softmax(&logits).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn composite_graph_gradients(seed in any::<u64>(), m in 1usize..=8, k in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = vec![
                random_tensor(&mut rng, &[m, k]),
                random_tensor(&mut rng, &[k]),
                random_tensor(&mut rng, &[m]),
            ];
            let report = check_graph(params, &|t, v| {
                let h = t.matmul(v[0], v[1]).unwrap();
                let h = t.add(h, v[2]).unwrap();
                let a = t.tanh(h);
                let b = t.sigmoid(h);
                let g = t.mul(a, b).unwrap();
                let c = t.concat(g, v[2], 0).unwrap();
                let p = t.softmax(c).unwrap();
                let s = t.slice(p, 0, m).unwrap();
                let st = t.stack(&[s, a]).unwrap();
                let mean = t.mean(&[a, s]).unwrap();
                let q = t.dot(mean, b).unwrap();
                let r = t.sum(st);
                let r = t.mul(r, q).unwrap();
                let logits = t.concat(g, a, 0).unwrap();
                let ce = t.softmax_cross_entropy(logits, 0).unwrap();
                t.add(r, ce).unwrap()
            });
            prop_assert!(report.max_rel_err() <= 1e-4, "{:?}", report.worst());
        }
    }
}
