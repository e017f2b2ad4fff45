//! Small hand-written networks used by tests and examples.

use crate::activation::Activation;
use crate::matrix::Matrix;
use crate::net::Network;

/// `d = 2`, `L = 2`, widths `(2, 2)`, `K = 1`, tanh.
pub fn two_layer() -> Network {
    Network::from_parts(
        2,
        Activation::Tanh,
        vec![
            Matrix::from_rows(&[[0.3, -0.5], [0.8, 0.1]]),
            Matrix::from_rows(&[[-0.4, 0.9], [0.6, 0.2]]),
        ],
        Matrix::from_rows(&[[1.1], [-0.7]]),
    )
    .expect("fixture shapes are consistent")
}

/// `d = 1`, `L = 1`, width 2, `K = 1`.
pub fn one_layer() -> Network {
    Network::from_parts(
        1,
        Activation::Tanh,
        vec![Matrix::from_rows(&[[0.7], [-1.3]])],
        Matrix::from_rows(&[[0.9], [1.6]]),
    )
    .expect("fixture shapes are consistent")
}
