//! Forward pass, squared loss and backpropagated gradients for one input.

use nfr::{backward, forward, init_network, loss_and_grad, Activation, Loss, NetworkSpec};

fn main() -> nfr::Result<()> {
    let spec = NetworkSpec::new(2, vec![16, 8], 1, Activation::Tanh);
    let net = init_network(&spec, 3)?;
    let x = [0.7, 1.0];
    let trace = forward(&net, &x)?;
    let (loss, d_out) = loss_and_grad(&trace.output, &Loss::Squared(&[0.25]))?;
    let grads = backward(&net, &trace, &d_out)?;

    println!("output {:.6}  loss {:.6}", trace.output[0], loss);
    for (l, g) in grads.weights.iter().enumerate() {
        println!("layer {} grad max |.| {:.3e}", l + 1, g.max_abs());
    }
    println!("top grad max |.| {:.3e}", grads.top.max_abs());
    Ok(())
}
