//! Importance weights from the proximal solver, then categorical resampling.

use nfr::repopulation::solve_weights_traced;
use nfr::{
    init_network, resample, total_reg, Activation, NetworkSpec, Preset, ProxConfig, RegularizerSpec,
};

fn main() -> nfr::Result<()> {
    let net = init_network(
        &NetworkSpec::new(2, vec![32, 16], 1, Activation::Tanh).with_gain(2.0),
        11,
    )?;
    let spec = RegularizerSpec::preset(Preset::L12, net.depth(), 1e-3);
    let sol = solve_weights_traced(&net, &spec, &ProxConfig::default())?;
    println!(
        "weighted objective {:.6e} -> {:.6e} in {} iterations",
        sol.objective[0],
        sol.objective.last().unwrap(),
        sol.iterations
    );
    for (l, p) in sol.weights.layers().iter().enumerate() {
        let max = p.iter().cloned().fold(0.0, f64::max);
        let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("layer {}: p in [{min:.3}, {max:.3}]", l + 1);
    }
    let new = resample(&net, &sol.weights, 5)?;
    println!(
        "R before {:.6e}  after resampling {:.6e}",
        total_reg(&net, &spec),
        total_reg(&new, &spec)
    );
    Ok(())
}
