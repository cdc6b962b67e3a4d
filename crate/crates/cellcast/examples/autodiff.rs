//! The reverse-mode tape on its own: build a small computation, backprop,
//! and verify one gradient entry against a finite difference.
//!
//! Run with: cargo run --release --example autodiff

use cellcast::nn::{Tape, Tensor};

fn forward(tape: &mut Tape, w: Tensor, x: Tensor) -> (cellcast::nn::Var, cellcast::nn::Var) {
    let wv = tape.leaf(w);
    let xv = tape.leaf(x);
    let z = tape.matmul(xv, wv);
    let s = tape.sigmoid(z);
    let loss = tape.mse_loss(s, vec![1.0, 0.0]);
    (wv, loss)
}

fn main() {
    let w = Tensor::from_vec(&[3, 1], vec![0.2, -0.4, 0.1]);
    let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, -1.0, 0.5, -0.3, 0.8]);

    let mut tape = Tape::new();
    let (wv, loss) = forward(&mut tape, w.clone(), x.clone());
    println!("loss = {:.6}", tape.value(loss).data[0]);

    let mut grads = tape.backward(loss);
    let grad_w = grads.take(wv).unwrap();
    println!("dloss/dw = {:?}", grad_w.data);

    // Check the first entry numerically.
    let step = 1e-6;
    let eval = |delta: f64| {
        let mut w2 = w.clone();
        w2.data[0] += delta;
        let mut tape = Tape::new();
        let (_, loss) = forward(&mut tape, w2, x.clone());
        tape.value(loss).data[0]
    };
    let numeric = (eval(step) - eval(-step)) / (2.0 * step);
    println!("finite difference for w[0]: {numeric:.9} (analytic {:.9})", grad_w.data[0]);
}
