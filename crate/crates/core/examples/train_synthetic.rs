//! Short training run on the synthetic target. Pass a JSON config path to
//! override the built-in settings.

use nfr::train::DataConfig;
use nfr::{train, OptimizerConfig, TrainConfig};

fn main() -> nfr::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => TrainConfig::load(path.as_ref())?,
        None => TrainConfig {
            depth: 2,
            base_width: 32,
            epochs: 30,
            data: DataConfig {
                n_train: 2000,
                n_test: 500,
                ..DataConfig::default()
            },
            optimizer: OptimizerConfig::adam(1e-3),
            ..TrainConfig::default()
        },
    };
    let out = train(&cfg)?;
    for m in out.metrics.iter().step_by(5.max(cfg.epochs / 10)) {
        println!(
            "epoch {:>4}  train {:.4e}  test {:.4e}  V {:.4e}",
            m.epoch, m.train_rmse, m.test_rmse, m.variance
        );
    }
    if let Some(m) = out.metrics.last() {
        println!("final train rmse {:.4e}", m.train_rmse);
    }
    Ok(())
}
