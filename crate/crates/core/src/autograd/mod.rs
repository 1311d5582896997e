//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Graphs are recorded eagerly: every operation computes its value right
//! away and, if any input requires a gradient, stores a closure that maps the
//! output gradient to input gradients. Heavy kernels (dilated convolution,
//! LSTM, STFT) are fused operations with hand-written backward passes.

mod conv;
mod graph;
mod ops;
mod recurrent;
mod tensor;

pub use conv::{avg_pool, conv1d, gated_activation, repeat_nearest, upsample_zeros};
pub use graph::{Grads, Var};
pub use ops::{concat, sum_all};
pub use recurrent::lstm;
pub use tensor::Tensor;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// `(input, element, analytic, numeric)` at the worst entry.
    pub worst: (usize, usize, f64, f64),
    pub checked: usize,
}

/// Check the gradients of a scalar function of several tensors.
///
/// Every `stride`-th element of every input is perturbed by `±eps`. `floor`
/// keeps the relative error meaningful where both gradients vanish.
pub fn check_gradients(
    f: impl Fn(&[Var]) -> Var,
    inputs: &[Tensor],
    eps: f64,
    stride: usize,
    floor: f64,
) -> GradCheck {
    let leaves: Vec<Var> = inputs.iter().cloned().map(Var::leaf).collect();
    let grads = f(&leaves).backward();
    let analytic: Vec<Tensor> = leaves.iter().map(|v| grads.get_or_zeros(v)).collect();

    let eval = |which: usize, idx: usize, delta: f64| -> f64 {
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == which {
                    t.data_mut()[idx] += delta;
                }
                Var::constant(t)
            })
            .collect();
        f(&vars).value().item()
    };

    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0, 0.0, 0.0),
        checked: 0,
    };
    for (which, input) in inputs.iter().enumerate() {
        for idx in (0..input.numel()).step_by(stride.max(1)) {
            let numeric = (eval(which, idx, eps) - eval(which, idx, -eps)) / (2.0 * eps);
            let a = analytic[which].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            out.checked += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = (which, idx, a, numeric);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn assert_grad(f: impl Fn(&[Var]) -> Var, inputs: &[Tensor]) {
        let r = check_gradients(f, inputs, 1e-6, 1, 1e-6);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn elementwise_chain() {
        assert_grad(
            |v| {
                let a = v[0].tanh().mul(&v[1].sigmoid());
                let b = v[0].leaky_relu(0.2).add(&v[1].square()).sub(&a.scale(0.3));
                b.abs().add_scalar(0.5).ln().sum().add(&b.l2_norm()).add(&a.div(&b.square().add_scalar(1.0)).sum())
            },
            &[rand_tensor(&[3, 4], 1), rand_tensor(&[3, 4], 2)],
        );
    }

    #[test]
    fn shape_ops() {
        assert_grad(
            |v| {
                let n = v[0].narrow(1, 1, 2);
                let c = concat(&[n.clone(), v[0].narrow(1, 0, 1)], 1);
                let t = c.transpose_last().reshape(&[2, 9]);
                sum_all(&[t.clone(), t.square()]).mean()
            },
            &[rand_tensor(&[2, 3, 3], 3)],
        );
    }

    #[test]
    fn linear_and_row_normalisation() {
        assert_grad(
            |v| {
                let y = v[0].linear(&v[1], Some(&v[2])).l2_normalize_rows();
                y.mul(&Var::constant(rand_tensor(&[5, 3], 9))).sum()
            },
            &[rand_tensor(&[5, 4], 4), rand_tensor(&[3, 4], 5), rand_tensor(&[3], 6)],
        );
    }

    #[test]
    fn dilated_convolution() {
        for (dilation, pad) in [(1, 1), (3, 3), (2, 0), (1, 4)] {
            assert_grad(
                |v| {
                    let y = conv1d(&v[0], &v[1], Some(&v[2]), dilation, pad);
                    y.mul(&Var::constant(rand_tensor(&[2, 3, 10], 19))).sum()
                },
                &[rand_tensor(&[2, 2, 10], 7), rand_tensor(&[3, 2, 3], 8), rand_tensor(&[3], 9)],
            );
        }
        // pointwise convolution takes the direct GEMM path
        assert_grad(
            |v| conv1d(&v[0], &v[1], None, 1, 0).square().sum(),
            &[rand_tensor(&[1, 3, 6], 10), rand_tensor(&[2, 3, 1], 11)],
        );
    }

    #[test]
    fn conv_matches_naive_loop() {
        let x = rand_tensor(&[1, 2, 9], 12);
        let w = rand_tensor(&[3, 2, 3], 13);
        let y = conv1d(&Var::constant(x.clone()), &Var::constant(w.clone()), None, 2, 2);
        for co in 0..3 {
            for t in 0..9 {
                let mut want = 0.0;
                for ci in 0..2 {
                    for k in 0..3 {
                        let i = t as isize + 2 * k as isize - 2;
                        if (0..9).contains(&i) {
                            want += w.data()[(co * 2 + ci) * 3 + k] * x.data()[ci * 9 + i as usize];
                        }
                    }
                }
                assert!((y.value().data()[co * 9 + t] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gate_pool_and_resampling() {
        assert_grad(
            |v| {
                let g = gated_activation(&v[0]);
                let r = repeat_nearest(&g, 3);
                let u = upsample_zeros(&g, 2);
                avg_pool(&r, 4, 2).square().sum().add(&avg_pool(&u, 4, 8).sum())
            },
            &[rand_tensor(&[2, 4, 8], 14)],
        );
    }

    #[test]
    fn lstm_layer() {
        assert_grad(
            |v| {
                let h = lstm(&v[0], &v[1], &v[2], &v[3]);
                h.mul(&Var::constant(rand_tensor(&[2, 4, 3], 20))).sum()
            },
            &[
                rand_tensor(&[2, 4, 2], 15),
                rand_tensor(&[12, 2], 16),
                rand_tensor(&[12, 3], 17),
                rand_tensor(&[12], 18),
            ],
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let a = Var::leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let c = Var::constant(Tensor::new(vec![2], vec![3.0, 4.0]));
        let grads = a.mul(&c).sum().backward();
        assert_eq!(grads.get(&a).unwrap().data(), &[3.0, 4.0]);
        assert!(grads.get(&c).is_none());
        assert!(!c.square().requires_grad());
        assert!(!a.detach().requires_grad());
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let a = Var::leaf(Tensor::scalar(3.0));
        let b = a.mul(&a).add(&a);
        let g = b.sum().backward();
        assert_eq!(g.get(&a).unwrap().item(), 7.0);
    }
}
