#![allow(dead_code)]

use nfr::{Activation, Matrix, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random network with entries in `[-scale, scale]` and weights bounded away
/// from zero by `min_abs`.
pub fn random_net(
    rng: &mut ChaCha8Rng,
    d: usize,
    widths: &[usize],
    k: usize,
    act: Activation,
    scale: f64,
    min_abs: f64,
) -> Network {
    let draw = |rng: &mut ChaCha8Rng| {
        let mag = rng.random_range(min_abs..scale);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    let mut prev = d;
    let mut weights = Vec::new();
    for &m in widths {
        weights.push(Matrix::from_fn(m, prev, |_, _| draw(rng)));
        prev = m;
    }
    let top = Matrix::from_fn(prev, k, |_, _| draw(rng));
    Network::from_parts(d, act, weights, top).unwrap()
}

pub fn random_shape(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize) -> Vec<usize> {
    let depth = rng.random_range(1..=max_depth);
    (0..depth)
        .map(|_| rng.random_range(1..=max_width))
        .collect()
}

pub fn act_of(i: usize) -> Activation {
    [Activation::Tanh, Activation::Sigmoid, Activation::Softplus][i % 3]
}

/// Independent scalar evaluation of the mean-field network written from the
/// defining sums, optionally adding `eps` to pre-activation `i` of hidden
/// layer `layer` (1-based).
pub fn naive_forward(net: &Network, x: &[f64], inject: Option<(usize, usize, f64)>) -> Vec<f64> {
    let h = |v: f64| match net.activation() {
        Activation::Tanh => v.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Softplus => (1.0 + v.exp()).ln(),
    };
    let mut f: Vec<f64> = x.to_vec();
    for (l, w) in net.weights().iter().enumerate() {
        let mut next = Vec::with_capacity(w.rows());
        for j in 0..w.rows() {
            let mut s = 0.0;
            for k in 0..w.cols() {
                s += w.get(j, k) * f[k];
            }
            let mut g = s / w.cols() as f64;
            if let Some((layer, i, eps)) = inject {
                if layer == l + 1 && i == j {
                    g += eps;
                }
            }
            next.push(h(g));
        }
        f = next;
    }
    let u = net.top();
    (0..u.cols())
        .map(|c| (0..u.rows()).map(|j| u.get(j, c) * f[j]).sum::<f64>() / u.rows() as f64)
        .collect()
}

/// `|a - b| <= rel * max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Relative error with an absolute floor in the denominator.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` with respect to entry `idx` of `params`.
pub fn central_diff(
    params: &mut [f64],
    idx: usize,
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = params[idx];
    params[idx] = orig + h;
    let plus = f(params);
    params[idx] = orig - h;
    let minus = f(params);
    params[idx] = orig;
    (plus - minus) / (2.0 * h)
}

/// Evenly spaced scalar grid featurized as `(x, 1)`.
pub fn grid2(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64, 1.0])
        .collect()
}

/// Finite-difference step used by the gradient checks.
pub const H: f64 = 1e-5;

/// Copy of `net` with one parameter shifted; slot `depth` is `U`.
pub fn perturbed(net: &Network, slot: usize, idx: usize, delta: f64) -> Network {
    let mut n = net.clone();
    let (ws, top) = n.params_mut();
    if slot < ws.len() {
        ws[slot].as_mut_slice()[idx] += delta;
    } else {
        top.as_mut_slice()[idx] += delta;
    }
    n
}

pub fn slot_len(net: &Network, slot: usize) -> usize {
    if slot < net.depth() {
        net.weights()[slot].as_slice().len()
    } else {
        net.top().as_slice().len()
    }
}

pub fn fd(net: &Network, slot: usize, idx: usize, f: &impl Fn(&Network) -> f64) -> f64 {
    (f(&perturbed(net, slot, idx, H)) - f(&perturbed(net, slot, idx, -H))) / (2.0 * H)
}
