mod common;

use common::*;
use nfr::sampling::{run_study, trial_seed};
use nfr::{
    approx_variance_terms, consistency_study, forward, leading_terms, variance_study, Activation,
    MasterSurrogate, Matrix, Network, StudyConfig,
};

/// The backward recursion `df/dz^(l)_j = mean_i w_{ij} h'(g_i) df/dz^(l+1)_i`,
/// `df/dz^(L)_j = u_j`, evaluated directly for scalar outputs.
fn dfdz(net: &Network, x: &[f64]) -> Vec<Vec<f64>> {
    let t = forward(net, x).unwrap();
    let depth = net.depth();
    let act = net.activation();
    let mut out = vec![Vec::new(); depth];
    out[depth - 1] = (0..net.width(depth)).map(|j| net.top().get(j, 0)).collect();
    for l in (1..depth).rev() {
        let w = &net.weights()[l];
        let up = &out[l];
        let g = &t.pre[l];
        out[l - 1] = (0..w.cols())
            .map(|j| {
                (0..w.rows())
                    .map(|i| w.get(i, j) * act.derivative(g[i]) * up[i])
                    .sum::<f64>()
                    / w.rows() as f64
            })
            .collect();
    }
    out
}

/// Nested averages of the leading constant for layer `l < L`, computed
/// without the sensitivity machinery.
fn brute_force_c(net: &Network, xs: &[Vec<f64>], l: usize) -> f64 {
    let act = net.activation();
    let mut total = 0.0;
    for x in xs {
        let t = forward(net, x).unwrap();
        let s = dfdz(net, x);
        let w = &net.weights()[l];
        let g = &t.pre[l];
        let f = t.features(l);
        let (m_up, m) = w.shape();
        let mut acc = 0.0;
        for j in 0..m {
            let mut inner = 0.0;
            for i in 0..m_up {
                inner += act.derivative(g[i]) * s[l][i] * (f[j] * w.get(i, j) - g[i]);
            }
            inner /= m_up as f64;
            acc += inner * inner;
        }
        total += acc / m as f64;
    }
    total / xs.len() as f64
}

#[test]
fn leading_constants_match_brute_force_recursion() {
    let mut r = rng(41);
    for widths in [vec![5, 6], vec![4, 5, 3]] {
        let net = random_net(&mut r, 2, &widths, 1, Activation::Tanh, 1.5, 0.0);
        let master = MasterSurrogate::new(net.clone());
        let xs = grid2(6, -2.0, 2.0);
        let terms = leading_terms(&master, &xs).unwrap();
        assert_eq!(terms.layers.len(), widths.len() - 1);
        for l in 1..widths.len() {
            let want = brute_force_c(&net, &xs, l);
            assert!(
                close(terms.layers[l - 1], want, 1e-10, 0.0),
                "C_{l}: {} vs {want}",
                terms.layers[l - 1]
            );
        }
    }
}

#[test]
fn top_constant_is_width_times_variance_top_term() {
    let mut r = rng(42);
    let net = random_net(&mut r, 2, &[9], 1, Activation::Tanh, 1.5, 0.0);
    let master = MasterSurrogate::new(net.clone());
    let xs = grid2(8, -2.0, 2.0);
    let terms = leading_terms(&master, &xs).unwrap();
    let v = approx_variance_terms(&net, &xs).unwrap();
    assert!(terms.layers.is_empty());
    assert!(close(terms.top, 9.0 * v.top, 1e-14, 0.0));
    let mut zero_top = net.clone();
    zero_top.top_mut().scale(0.0);
    assert_eq!(
        leading_terms(&MasterSurrogate::new(zero_top), &xs)
            .unwrap()
            .top,
        0.0
    );
}

#[test]
fn identical_unit_master_has_no_error() {
    let net = Network::from_parts(
        2,
        Activation::Tanh,
        vec![
            Matrix::from_rows(&[[0.9, -0.4]; 6]),
            Matrix::from_rows(&[[0.5; 6]; 4]),
        ],
        Matrix::from_rows(&[[1.3]; 4]),
    )
    .unwrap();
    let master = MasterSurrogate::new(net);
    let xs = grid2(5, -2.0, 2.0);
    let cfg = StudyConfig::new(vec![1, 3, 8], 4, 7);
    let r = consistency_study(&master, &cfg, &xs).unwrap();
    assert!(r
        .widths
        .iter()
        .all(|w| w.mean_l1 < 1e-14 && w.mean_mse < 1e-28));
    assert!(leading_terms(&master, &xs).unwrap().total() < 1e-28);
}

#[test]
fn subsampling_is_deterministic_and_gathers_master_entries() {
    let mut r = rng(43);
    let net = random_net(&mut r, 2, &[7, 5], 1, Activation::Tanh, 1.0, 0.0);
    let master = MasterSurrogate::new(net.clone());
    let (a, idx) = master.subsample_with_indices(&[4, 9], 3).unwrap();
    let (b, _) = master.subsample_with_indices(&[4, 9], 3).unwrap();
    assert!(a.bit_eq(&b));
    for i in 0..9 {
        for j in 0..4 {
            assert_eq!(
                a.weights()[1].get(i, j),
                net.weights()[1].get(idx[1][i], idx[0][j])
            );
        }
        assert_eq!(a.top().get(i, 0), net.top().get(idx[1][i], 0));
    }
    for i in 0..4 {
        assert_eq!(a.weights()[0].row(i), net.weights()[0].row(idx[0][i]));
    }
}

#[test]
fn layer_sums_are_unbiased() {
    // With the upper path fixed, the subsampled first-layer features feed
    // g^(2) = mean_j w_{i,idx_j} f_{idx_j}, whose expectation is the master g^(2).
    let mut r = rng(44);
    let net = random_net(&mut r, 2, &[12, 3], 1, Activation::Tanh, 1.5, 0.0);
    let x = [0.8, 1.0];
    let t = forward(&net, &x).unwrap();
    let master = MasterSurrogate::new(net.clone());
    let n = 3000;
    let m = 4;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for s in 0..n {
        let (_, idx) = master.subsample_with_indices(&[m, 3], s).unwrap();
        for i in 0..3 {
            let g: f64 = idx[0]
                .iter()
                .map(|&j| net.weights()[1].get(i, j) * t.features(1)[j])
                .sum::<f64>()
                / m as f64;
            sum[i] += g;
            sq[i] += g * g;
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let se = ((sq[i] / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - t.pre[1][i]).abs() <= 3.0 * se,
            "unit {i}: {mean} vs {}",
            t.pre[1][i]
        );
    }
}

#[test]
fn doubling_trials_shrinks_standard_errors_by_root_two() {
    let net = nfr::init_network(
        &nfr::NetworkSpec::new(2, vec![64, 64], 1, Activation::Tanh).with_gain(0.5),
        5,
    )
    .unwrap();
    let master = MasterSurrogate::new(net);
    let xs = grid2(8, -2.0, 2.0);
    for seed in 0..5 {
        let a = run_study(&master, &StudyConfig::new(vec![16], 1000, 2 * seed), &xs).unwrap();
        let b = run_study(
            &master,
            &StudyConfig::new(vec![16], 2000, 2 * seed + 1),
            &xs,
        )
        .unwrap();
        let ratio = a.widths[0].se_l1.unwrap() / b.widths[0].se_l1.unwrap();
        assert!((1.25..1.6).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn single_width_has_no_slope() {
    let net =
        nfr::init_network(&nfr::NetworkSpec::new(2, vec![16], 1, Activation::Tanh), 5).unwrap();
    let r = variance_study(
        &MasterSurrogate::new(net),
        &StudyConfig::new(vec![4], 3, 0),
        &grid2(4, -1.0, 1.0),
    )
    .unwrap();
    assert_eq!(r.slope, None);
}

#[test]
fn trial_seeds_are_distinct() {
    let mut seen = std::collections::HashSet::new();
    for w in 0..4 {
        for t in 0..500 {
            assert!(seen.insert(trial_seed(9, w, t)));
        }
    }
}
