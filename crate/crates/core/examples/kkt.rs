//! Stationarity pairs of a briefly trained network and their correlation.

use nfr::train::DataConfig;
use nfr::{kkt_pairs, pearson, train, OptimizerConfig, TrainConfig};

fn main() -> nfr::Result<()> {
    let cfg = TrainConfig {
        depth: 2,
        base_width: 16,
        epochs: 20,
        data: DataConfig {
            n_train: 1000,
            n_test: 200,
            ..DataConfig::default()
        },
        optimizer: OptimizerConfig::adam(1e-3),
        ..TrainConfig::default()
    };
    let net = train(&cfg)?.network;
    let spec = cfg.regularizer_spec()?;
    for l in 1..=net.depth() {
        let pairs = kkt_pairs(&net, &spec, l)?;
        println!(
            "layer {l}: {} pairs, pearson {:.4}",
            pairs.len(),
            pearson(&pairs)?
        );
    }
    Ok(())
}
