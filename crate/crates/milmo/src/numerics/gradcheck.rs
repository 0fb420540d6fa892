//! Finite-difference verification of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Relative error between an analytic and a numeric derivative, with the
/// denominator floored at 1 so near-zero gradients compare absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compare the reverse-mode gradient of `f` at `x` against central
/// differences with step `eps`. Returns the maximum relative error over all
/// elements of `x`. `f` must build a scalar from its input variable and be
/// deterministic across calls (no train-mode dropout).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Graph, Var) -> Var,
{
    grad_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(x), eps)
}

/// Multi-input variant of [`grad_check`]: every tensor in `inputs` is bound
/// as a trainable leaf and checked element by element. This is how whole
/// models are verified — bind each parameter tensor and rebuild the loss.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    // Analytic gradients in one pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars);
    assert_eq!(g.value(out).numel(), 1, "grad_check target must be scalar");
    let grads = g.backward(out).expect("backward");
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[ti].data_mut()[j] = orig + eps;
            let up = eval(&work);
            work[ti].data_mut()[j] = orig - eps;
            let down = eval(&work);
            work[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[ti].data()[j], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_normal()).collect()).unwrap()
    }

    #[test]
    fn square_function_hand_case() {
        // f(x) = x^2 at x = 3: analytic 6 vs central difference.
        let x = Tensor::scalar(3.0);
        let err = grad_check(
            |g, v| {
                let y = g.mul(v, v).unwrap();
                g.sum_all(y)
            },
            &x,
            1e-5,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn softmax_sum_is_constant() {
        // sum(softmax(x)) == 1, so the gradient is ~0 everywhere.
        let mut rng = Rng::new(2);
        let x = random_tensor(&[2, 5], &mut rng);
        let mut g = Graph::new();
        let v = g.param(x.clone());
        let s = g.softmax(v);
        let out = g.sum_all(s);
        let grads = g.backward(out).unwrap();
        for &gv in grads.get(v).unwrap().data() {
            assert!(gv.abs() < 1e-12);
        }
        let err = grad_check(
            |g, v| {
                let s = g.softmax(v);
                g.sum_all(s)
            },
            &x,
            1e-5,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn cross_entropy_gradient_matches() {
        let mut rng = Rng::new(3);
        let x = random_tensor(&[2, 3], &mut rng);
        let err = grad_check(
            |g, v| g.cross_entropy(v, &[2, 0]).unwrap(),
            &x,
            1e-5,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn every_core_op_passes() {
        let mut rng = Rng::new(4);
        let threshold = 1e-5;

        // matmul + add_bias + relu
        let a = random_tensor(&[3, 4], &mut rng);
        let w = random_tensor(&[4, 2], &mut rng);
        let b = random_tensor(&[2], &mut rng);
        let err = grad_check_many(
            |g, v| {
                let h = g.matmul(v[0], v[1]).unwrap();
                let h = g.add_bias(h, v[2]).unwrap();
                let h = g.relu(h);
                g.sum_all(h)
            },
            &[a.clone(), w.clone(), b.clone()],
            1e-5,
        );
        assert!(err < threshold, "matmul chain rel err {err}");

        // matmul_nt
        let err = grad_check_many(
            |g, v| {
                let h = g.matmul_nt(v[0], v[1]).unwrap();
                let s = g.tanh(h);
                g.sum_all(s)
            },
            &[random_tensor(&[2, 3], &mut rng), random_tensor(&[4, 3], &mut rng)],
            1e-5,
        );
        assert!(err < threshold, "matmul_nt rel err {err}");

        // gather -> layer_norm -> gelu
        let table = random_tensor(&[5, 4], &mut rng);
        let gain = random_tensor(&[4], &mut rng);
        let bias = random_tensor(&[4], &mut rng);
        let err = grad_check_many(
            |g, v| {
                let e = g.gather(v[0], &[0, 3, 3, 1]).unwrap();
                let n = g.layer_norm(e, v[1], v[2], 1e-5).unwrap();
                let n = g.gelu(n);
                g.sum_all(n)
            },
            &[table, gain, bias],
            1e-5,
        );
        assert!(err < threshold, "gather/layer_norm/gelu rel err {err}");

        // softmax + mul + sigmoid
        let err = grad_check_many(
            |g, v| {
                let s = g.softmax(v[0]);
                let m = g.mul(s, v[1]).unwrap();
                let m = g.sigmoid(m);
                g.sum_all(m)
            },
            &[random_tensor(&[2, 4], &mut rng), random_tensor(&[2, 4], &mut rng)],
            1e-5,
        );
        assert!(err < threshold, "softmax/mul/sigmoid rel err {err}");

        // pooling, slicing, concatenation, unfold
        let x = random_tensor(&[6, 3], &mut rng);
        let err = grad_check(
            |g, v| {
                let u = g.unfold(v, 3, 1).unwrap();
                let p = g.max_pool1d(u, 3, 2).unwrap();
                let m = g.max_over_rows(p).unwrap();
                let s1 = g.sum_all(m);
                let n = g.mean_over_rows(v).unwrap();
                let s2 = g.sum_all(n);
                let lo = g.slice_rows(v, 0, 2).unwrap();
                let hi = g.slice_cols(v, 1, 2).unwrap();
                let top = g.slice_rows(hi, 0, 2).unwrap();
                let cat = g.concat_cols(&[lo, top]).unwrap();
                let s3 = g.sum_all(cat);
                let t = g.add(s1, s2).unwrap();
                g.add(t, s3).unwrap()
            },
            &x,
            1e-5,
        );
        assert!(err < threshold, "pooling chain rel err {err}");
    }
}
