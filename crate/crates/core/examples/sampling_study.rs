//! Subsample a wide master network and compare m * MSE with the leading terms.

use nfr::data::{featurize, linspace};
use nfr::{
    init_network, leading_terms, variance_study, Activation, MasterSurrogate, NetworkSpec,
    StudyConfig,
};

fn main() -> nfr::Result<()> {
    let net = init_network(&NetworkSpec::new(2, vec![512, 512], 1, Activation::Tanh), 2)?;
    let master = MasterSurrogate::new(net);
    let xs: Vec<Vec<f64>> = linspace(-3.0, 3.0, 32)
        .into_iter()
        .map(|x| featurize(x, true))
        .collect();
    let cfg = StudyConfig::new(vec![16, 32, 64, 128], 100, 9);
    let result = variance_study(&master, &cfg, &xs)?;
    let c = leading_terms(&master, &xs)?.total();
    for w in &result.widths {
        println!(
            "m={:>4}  mse {:.4e}  m*mse {:.4e}",
            w.m,
            w.mean_mse,
            w.m as f64 * w.mean_mse
        );
    }
    println!("sum of leading terms {c:.4e}  slope {:?}", result.slope);
    Ok(())
}
