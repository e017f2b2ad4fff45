mod common;

use common::*;
use nfr::regularizer::{layer_reg, top_reg};
use nfr::{
    total_reg, weighted_reg, weighted_reg_grad_p, Activation, ImportanceWeights, Matrix, Network,
    Preset, RegularizerSpec,
};
use proptest::prelude::*;

fn w_fixture() -> Matrix {
    Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]])
}

#[test]
fn layer_values_by_direct_evaluation() {
    let e12 = Preset::L12.exponents();
    let e21 = Preset::L21.exponents();
    assert_eq!(layer_reg(&w_fixture(), e12.o1, e12.o2), 6.5);
    assert_eq!(layer_reg(&w_fixture(), e21.o1, e21.o2), 7.5);
    assert_eq!(layer_reg(&Matrix::zeros(3, 2), 0.5, 4.0), 0.0);
}

#[test]
fn top_values_by_direct_evaluation() {
    assert_eq!(
        top_reg(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]), 2.0),
        2.5
    );
    assert_eq!(top_reg(&Matrix::from_rows(&[[3.0, 4.0]]), 2.0), 25.0);
    assert_eq!(top_reg(&Matrix::zeros(4, 2), 2.0), 0.0);
}

#[test]
fn total_is_the_penalized_sum() {
    let u = Matrix::from_rows(&[[1.0], [2.0]]);
    let net = Network::from_parts(2, Activation::Tanh, vec![w_fixture()], u.clone()).unwrap();
    let spec = RegularizerSpec::preset(Preset::L12, 1, 1.0);
    assert_eq!(total_reg(&net, &spec), 6.5 + top_reg(&u, 2.0));
    assert_eq!(
        total_reg(&net, &RegularizerSpec::preset(Preset::L12, 1, 0.0)),
        0.0
    );
}

#[test]
fn uniform_weights_reproduce_the_plain_regularizer() {
    let mut r = rng(3);
    for case in 0..10 {
        let widths = random_shape(&mut r, 3, 5);
        let net = random_net(&mut r, 2, &widths, 2, Activation::Tanh, 2.0, 0.0);
        let preset = [Preset::L12, Preset::L21, Preset::LHalf4][case % 3];
        let spec = RegularizerSpec::preset(preset, net.depth(), 0.4);
        let p = ImportanceWeights::uniform(&net);
        let a = weighted_reg(&net, &spec, &p).unwrap();
        let b = total_reg(&net, &spec);
        assert!(close(a, b, 1e-12, 0.0), "{a} vs {b}");
    }
}

#[test]
fn weighted_scan_over_two_identical_neurons_is_minimized_at_uniform() {
    let w = Matrix::from_rows(&[[0.8, -0.3], [0.8, -0.3]]);
    let u = Matrix::from_rows(&[[1.2], [1.2]]);
    let net = Network::from_parts(2, Activation::Tanh, vec![w], u).unwrap();
    let spec = RegularizerSpec::preset(Preset::L12, 1, 1.0);
    let value = |t: f64| {
        weighted_reg(
            &net,
            &spec,
            &ImportanceWeights::new(vec![vec![2.0 - t, t]]).unwrap(),
        )
        .unwrap()
    };
    let ts: Vec<f64> = (1..=19).map(|i| i as f64 / 10.0).collect();
    let best = ts
        .iter()
        .copied()
        .min_by(|a, b| value(*a).total_cmp(&value(*b)))
        .unwrap();
    assert!((best - 1.0).abs() < 1e-12, "minimizer at {best}");
}

#[test]
fn weighted_value_and_gradient_are_linear_in_lambda() {
    let net = nfr::fixtures::two_layer();
    let spec = RegularizerSpec::preset(Preset::L12, 2, 0.3);
    let p = ImportanceWeights::new(vec![vec![0.5, 1.5], vec![1.2, 0.8]]).unwrap();
    let a = weighted_reg(&net, &spec, &p).unwrap();
    let b = weighted_reg(&net, &spec.scaled(2.0), &p).unwrap();
    assert!(close(b, 2.0 * a, 1e-14, 0.0));
    let zero = weighted_reg_grad_p(&net, &spec.scaled(0.0), &p).unwrap();
    assert!(zero.iter().flatten().all(|&g| g == 0.0));
}

#[test]
fn symmetric_layers_have_constant_weight_gradient() {
    let net = Network::from_parts(
        2,
        Activation::Tanh,
        vec![Matrix::filled(3, 2, 0.7), Matrix::filled(4, 3, -0.4)],
        Matrix::filled(4, 1, 1.1),
    )
    .unwrap();
    let spec = RegularizerSpec::preset(Preset::L12, 2, 1.0);
    let g = weighted_reg_grad_p(&net, &spec, &ImportanceWeights::uniform(&net)).unwrap();
    for layer in g {
        assert!(layer.iter().all(|v| (v - layer[0]).abs() < 1e-14));
    }
}

#[test]
fn non_positive_weights_are_rejected() {
    let net = nfr::fixtures::two_layer();
    let spec = RegularizerSpec::preset(Preset::L12, 2, 1.0);
    assert!(ImportanceWeights::new(vec![vec![2.0, 0.0], vec![1.0, 1.0]]).is_err());
    let bad = ImportanceWeights::from_raw(vec![vec![1.0], vec![1.0, 1.0]]).unwrap();
    assert!(weighted_reg(&net, &spec, &bad).is_err());
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| Matrix::from_vec(r, c, v))
    })
}

proptest! {
    #[test]
    fn layer_reg_is_positively_homogeneous(w in matrix_strategy(), c in -3.0f64..3.0, preset in 0usize..3) {
        let e = [Preset::L12, Preset::L21, Preset::LHalf4][preset].exponents();
        let mut cw = w.clone();
        cw.scale(c);
        let want = c.abs().powf(e.o1 * e.o2) * layer_reg(&w, e.o1, e.o2);
        prop_assert!(close(layer_reg(&cw, e.o1, e.o2), want, 1e-10, 1e-300));
    }

    #[test]
    fn regularizers_are_non_negative_and_vanish_only_at_zero(w in matrix_strategy(), preset in 0usize..3) {
        let e = [Preset::L12, Preset::L21, Preset::LHalf4][preset].exponents();
        let v = layer_reg(&w, e.o1, e.o2);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, w.as_slice().iter().all(|&x| x == 0.0));
        prop_assert!(top_reg(&w, e.o3) >= 0.0);
    }
}
