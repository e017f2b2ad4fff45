//! Approximate variance of a random network, split by layer.

use nfr::data::{featurize, linspace};
use nfr::{approx_variance_terms, init_network, Activation, NetworkSpec};

fn main() -> nfr::Result<()> {
    let xs: Vec<Vec<f64>> = linspace(-3.0, 3.0, 128)
        .into_iter()
        .map(|x| featurize(x, true))
        .collect();
    for depth in 1..=3 {
        let net = init_network(
            &NetworkSpec::new(2, vec![64; depth], 1, Activation::Tanh),
            1,
        )?;
        let v = approx_variance_terms(&net, &xs)?;
        let layers: Vec<String> = v.layers.iter().map(|t| format!("{t:.4e}")).collect();
        println!(
            "L={depth}: layers [{}]  top {:.4e}  total {:.4e}",
            layers.join(", "),
            v.top,
            v.total()
        );
    }
    Ok(())
}
