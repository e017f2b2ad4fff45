//! Save a network, load it back and confirm bit equality.

use nfr::{checkpoint, init_network, Activation, NetworkSpec};

fn main() -> nfr::Result<()> {
    let net = init_network(
        &NetworkSpec::new(2, vec![8, 4, 2], 1, Activation::Softplus),
        4,
    )?;
    let dir = std::env::temp_dir().join("nfr-checkpoint-example");
    let path = dir.join("model.nfr");
    checkpoint::save(&net, &path, true)?;
    let back = checkpoint::load(&path)?;
    println!(
        "{} bytes, identical: {}",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        back.bit_eq(&net)
    );
    Ok(())
}
