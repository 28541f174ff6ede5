use dsrm_core::numerics::{finite_diff_grad, Tensor, DEFAULT_FD_STEP};
use dsrm_core::regressor::{backward, loss, lstm_forward, Readout, RegressorParams, Sample};
use dsrm_core::spatial::SpatialSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|k| Sample {
            sequence: SpatialSequence {
                row: 0,
                col: k,
                steps: std::array::from_fn(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()),
            },
            target: rng.random_range(0.0..3.0),
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar, loop-by-loop LSTM cell with gate columns ordered i, f, o, g.
fn reference_layer(x: &[Vec<f64>], w: &Tensor, u: &Tensor, b: &Tensor, hidden: usize) -> Vec<Vec<f64>> {
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut out = Vec::new();
    for xt in x {
        let mut z = b.data().to_vec();
        for (col, zc) in z.iter_mut().enumerate() {
            for (k, xk) in xt.iter().enumerate() {
                *zc += xk * w.data()[k * 4 * hidden + col];
            }
            for (k, hk) in h.iter().enumerate() {
                *zc += hk * u.data()[k * 4 * hidden + col];
            }
        }
        for q in 0..hidden {
            let i = sigmoid(z[q]);
            let f = sigmoid(z[hidden + q]);
            let o = sigmoid(z[2 * hidden + q]);
            let g = z[3 * hidden + q].tanh();
            c[q] = f * c[q] + i * g;
            h[q] = o * c[q].tanh();
        }
        out.push(h.clone());
    }
    out
}

#[test]
fn forward_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let mut params = RegressorParams::with_hidden(4, 6, seed);
        for (_, t) in params.blocks_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
        for sample in random_batch(&mut rng, 4, 3) {
            let steps = sample.sequence.steps.to_vec();
            let h1 = reference_layer(&steps, &params.layer1.w, &params.layer1.u, &params.layer1.b, 6);
            let h2 = reference_layer(&h1, &params.layer2.w, &params.layer2.u, &params.layer2.b, 6);
            for readout in [Readout::Final, Readout::Center] {
                params.readout = readout;
                let last = &h2[readout.step()];
                let expected: f64 =
                    last.iter().zip(params.head_w.data()).map(|(h, w)| h * w).sum::<f64>() + params.head_b.data()[0];
                let trace = lstm_forward(&sample.sequence, &params).unwrap();
                assert!((trace.prediction - expected).abs() < 1e-12, "{} vs {expected}", trace.prediction);
                assert_eq!(trace.layer1_hidden.len(), 3);
            }
        }
    }
}

#[test]
fn bptt_matches_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = RegressorParams::with_hidden(4, 5, seed);
        let batch = random_batch(&mut rng, 4, 3);
        let grads = backward(&batch, &params).unwrap();
        assert!((grads.loss - loss(&batch, &params).unwrap()).abs() < 1e-12);

        let analytic = grads.params.blocks();
        for (b, (name, block)) in params.blocks().into_iter().enumerate() {
            let numeric = finite_diff_grad(
                |probe| {
                    let mut p = params.clone();
                    *p.blocks_mut()[b].1 = probe.clone();
                    loss(&batch, &p).unwrap()
                },
                block,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            for (k, (a, n)) in analytic[b].1.data().iter().zip(numeric.data()).enumerate() {
                let tol = 1e-4 * a.abs().max(n.abs()).max(1e-2);
                assert!((a - n).abs() <= tol, "seed {seed} {name}[{k}]: analytic {a} numeric {n}");
            }
        }
    }
}

fn flat_grads(batch: &[Sample], params: &RegressorParams) -> Vec<f64> {
    backward(batch, params).unwrap().params.blocks().iter().flat_map(|(_, t)| t.data().to_vec()).collect()
}

#[test]
fn gradients_ignore_order_and_duplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = RegressorParams::with_hidden(3, 4, 9);
    let batch = random_batch(&mut rng, 3, 5);
    let base = flat_grads(&batch, &params);

    let mut reversed = batch.clone();
    reversed.reverse();
    let doubled: Vec<Sample> = batch.iter().chain(&batch).cloned().collect();
    for other in [flat_grads(&reversed, &params), flat_grads(&doubled, &params)] {
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
