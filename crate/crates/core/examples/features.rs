//! Feature functions of a few hidden units written as CSV to stdout.

use nfr::data::{featurize, linspace};
use nfr::{feature_functions, init_network, Activation, NetworkSpec};

fn main() -> nfr::Result<()> {
    let net = init_network(
        &NetworkSpec::new(2, vec![32, 16], 1, Activation::Tanh).with_gain(3.0),
        6,
    )?;
    let grid = linspace(-3.0, 3.0, 13);
    let xs: Vec<Vec<f64>> = grid.iter().map(|&x| featurize(x, true)).collect();
    let ids = [0, 5, 10];
    let values = feature_functions(&net, 2, &xs, &ids)?;
    println!("x,f_0,f_5,f_10");
    for (i, x) in grid.iter().enumerate() {
        let row: Vec<String> = values.row(i).iter().map(|v| format!("{v:.5}")).collect();
        println!("{x:.3},{}", row.join(","));
    }
    Ok(())
}
