//! The numerics layer: build a graph, run backward, verify against finite
//! differences, and take optimizer steps.
//!
//! ```bash
//! cargo run --example tensors_and_gradients
//! ```

use milmo::numerics::{grad_check, Adam, AdamConfig, Graph, ParamSet, Tensor};
use milmo::rng::Rng;

fn main() {
    // Forward and backward through a small expression.
    let mut g = Graph::new();
    let a = g.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let b = g.param(Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap());
    let product = g.matmul(a, b).unwrap();
    println!("[[1,2],[3,4]] x [[5],[6]] = {:?}", g.value(product).data());
    let loss = g.sum_all(product);
    let grads = g.backward(loss).unwrap();
    println!("d/dA sum(A*B) = {:?}", grads.get(a).unwrap().data());
    println!("d/dB sum(A*B) = {:?}", grads.get(b).unwrap().data());

    // Check a composite gradient against central differences.
    let mut rng = Rng::new(3);
    let x = Tensor::from_vec(&[2, 4], (0..8).map(|_| rng.gen_normal()).collect()).unwrap();
    let err = grad_check(
        |g, v| {
            let s = g.softmax(v);
            let t = g.tanh(s);
            let ce = g.cross_entropy(t, &[3, 0]).unwrap();
            let m = g.mean_all(v);
            g.add(ce, m).unwrap()
        },
        &x,
        1e-5,
    );
    println!("softmax/tanh/cross-entropy composite: max rel err {err:.2e}");

    // Minimize ||w - target||^2 with the adaptive-moment optimizer.
    let mut params = ParamSet::new();
    params.add("w", Tensor::zeros(&[3]));
    let target = [0.5, -1.25, 2.0];
    let mut adam = Adam::new(AdamConfig::with_lr(0.05), &params);
    for step in 0..400 {
        let mut g = Graph::new();
        let w = g.param(params.get("w").unwrap().clone());
        let t = g.constant(Tensor::from_vec(&[3], target.to_vec()).unwrap());
        let diff = g.sub(w, t).unwrap();
        let sq = g.mul(diff, diff).unwrap();
        let loss = g.sum_all(sq);
        if step % 100 == 0 {
            println!("step {step:>3}: loss {:.6}", g.value(loss).item());
        }
        let grads = g.backward(loss).unwrap();
        adam.step(&mut params, &[grads.get(w).cloned()]).unwrap();
    }
    println!("w -> {:?} (target {target:?})", params.get("w").unwrap().data());
}
