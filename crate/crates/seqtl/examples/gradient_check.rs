//! Check backpropagation through time against central finite differences
//! on a small random network, printing the worst relative error.
//!
//! Run with: cargo run --release --example gradient_check

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtl::rnn::{backward_bptt, forward, init_params};

fn main() {
    let (input, hidden, depth, tasks, steps) = (5, 4, 2, 3, 6);
    let (stack, head) = init_params(input, hidden, depth, tasks, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values = Array2::from_shape_fn((steps, input), |_| rng.random_range(-1.5..1.5));
    let labels = [1u8, 0, 1];

    let trace = forward(&values.view(), &stack, &head, None).unwrap();
    let (grads, loss) = backward_bptt(&trace, &labels, &stack, &head).unwrap();
    println!("loss = {loss:.6}");

    // Finite differences over the head bias (cheap) and a recurrent weight
    // of each layer (the deep path through time).
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, analytic: f64, perturb: &dyn Fn(f64) -> f64| {
        let numeric = (perturb(step) - perturb(-step)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        println!("{name:26} analytic {analytic:+.8e}  numeric {numeric:+.8e}  rel {rel:.2e}");
        worst = worst.max(rel);
    };

    let loss_with = |stack: &seqtl::GruStack, head: &seqtl::HeadParams| -> f64 {
        let t = forward(&values.view(), stack, head, None).unwrap();
        backward_bptt(&t, &labels, stack, head).unwrap().1
    };

    check("head.bias[0]", grads.head_bias[0], &|eps| {
        let mut h = head.clone();
        h.bias[0] += eps;
        loss_with(&stack, &h)
    });
    for l in 0..depth {
        check(
            &format!("layers[{l}].u_cand[1,2]"),
            grads.layers[l].u_cand[(1, 2)],
            &|eps| {
                let mut s = stack.clone();
                s.layers[l].u_cand[(1, 2)] += eps;
                loss_with(&s, &head)
            },
        );
        check(
            &format!("layers[{l}].w_reset[0,1]"),
            grads.layers[l].w_reset[(0, 1)],
            &|eps| {
                let mut s = stack.clone();
                s.layers[l].w_reset[(0, 1)] += eps;
                loss_with(&s, &head)
            },
        );
    }
    println!("worst relative error: {worst:.2e}");
    assert!(worst < 1e-4, "gradient check failed");
}
