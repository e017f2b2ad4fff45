//! Values of the three regularizer presets on a small network.

use nfr::fixtures::two_layer;
use nfr::{layer_reg, total_reg, Preset, RegularizerSpec};

fn main() {
    let net = two_layer();
    for preset in [Preset::L12, Preset::L21, Preset::LHalf4] {
        let e = preset.exponents();
        let per_layer: Vec<f64> = net
            .weights()
            .iter()
            .map(|w| layer_reg(w, e.o1, e.o2))
            .collect();
        let spec = RegularizerSpec::preset(preset, net.depth(), 1.0);
        println!(
            "{preset:?}: layers {per_layer:.4?}  total {:.4}",
            total_reg(&net, &spec)
        );
    }
}
