//! Mean-field fully connected network.
//!
//! Hidden layer `l` (1-based, `1..=L`) computes
//! `g_j = (1/m_{l-1}) sum_k w_{j,k} f_k` and `f_j = h(g_j)`, with `f^(0) = x`.
//! The output is `(1/m_L) sum_j u_j f_j`. There are no biases.
//!
//! Storage is 0-based: `weights()[i]` holds `W^(i+1)` with shape
//! `m^(i+1) x m^(i)` (rows index the output side). The top matrix `U` is
//! `m^(L) x K` with row `j` equal to `u_j`. Public functions that take a layer
//! argument use the 1-based convention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shape and activation of a network, plus the initialization gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Multiplies the standard deviation of every initial weight.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Self {
        Self {
            input_dim,
            widths,
            output_dim,
            activation,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "input and output dims must be >= 1".into(),
            ));
        }
        if self.widths.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one hidden layer is required".into(),
            ));
        }
        if let Some(l) = self.widths.iter().position(|&m| m == 0) {
            return Err(Error::InvalidArgument(format!(
                "hidden layer {} has width 0",
                l + 1
            )));
        }
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gain must be finite and >= 0, got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    widths: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    weights: Vec<Matrix>,
    top: Matrix,
    seed: u64,
}

impl Network {
    /// Assembles a network from explicit matrices, validating every shape.
    pub fn from_parts(
        input_dim: usize,
        activation: Activation,
        weights: Vec<Matrix>,
        top: Matrix,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one hidden layer is required".into(),
            ));
        }
        let mut prev = input_dim;
        let mut widths = Vec::with_capacity(weights.len());
        for (i, w) in weights.iter().enumerate() {
            if w.cols() != prev {
                return Err(Error::dim(
                    format!("layer {} weight columns", i + 1),
                    prev,
                    w.cols(),
                ));
            }
            if w.rows() == 0 {
                return Err(Error::InvalidArgument(format!(
                    "hidden layer {} has width 0",
                    i + 1
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("layer {} weights", i + 1)));
            }
            widths.push(w.rows());
            prev = w.rows();
        }
        if top.rows() != prev {
            return Err(Error::dim("top matrix rows", prev, top.rows()));
        }
        if top.cols() == 0 {
            return Err(Error::InvalidArgument("output dim must be >= 1".into()));
        }
        if !top.is_finite() {
            return Err(Error::NonFinite("top weights".into()));
        }
        Ok(Self {
            input_dim,
            output_dim: top.cols(),
            widths,
            activation,
            weights,
            top,
            seed: 0,
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut prev = spec.input_dim;
        let weights = spec
            .widths
            .iter()
            .map(|&m| {
                let w = Matrix::zeros(m, prev);
                prev = m;
                w
            })
            .collect();
        let top = Matrix::zeros(prev, spec.output_dim);
        Self::from_parts(spec.input_dim, spec.activation, weights, top)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    #[inline]
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `m^(l)` for `l` in `0..=L`, where `m^(0)` is the input dimension.
    #[inline]
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.widths[l - 1]
        }
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Seed the network was initialized with (0 when assembled by hand).
    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    #[inline]
    pub fn top(&self) -> &Matrix {
        &self.top
    }

    #[inline]
    pub fn top_mut(&mut self) -> &mut Matrix {
        &mut self.top
    }

    /// Mutable access to all weight matrices and the top matrix at once.
    pub fn params_mut(&mut self) -> (&mut [Matrix], &mut Matrix) {
        (&mut self.weights, &mut self.top)
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::new(
            self.input_dim,
            self.widths.clone(),
            self.output_dim,
            self.activation,
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.as_slice().len())
            .sum::<usize>()
            + self.top.as_slice().len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.top.is_finite()
    }

    /// Bitwise equality of shapes, activation and every parameter.
    pub fn bit_eq(&self, other: &Network) -> bool {
        self.input_dim == other.input_dim
            && self.widths == other.widths
            && self.activation == other.activation
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.bit_eq(b))
            && self.top.bit_eq(&other.top)
    }

    /// Evaluates the network output only.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(forward(self, x)?.output)
    }
}

/// Draws `w^(l)_{j,k} ~ N(0, gain^2 m^(l-1))` and `u_j ~ N(0, gain^2 m^(L))`.
///
/// The variance scale cancels the `1/m` averaging so pre-activations stay at
/// unit order independently of width. Parameters are drawn in storage order
/// (`W^(1)` row-major, ..., `W^(L)`, then `U`) from a ChaCha8 stream.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::zeros(spec)?;
    let mut prev = spec.input_dim;
    for w in net.weights.iter_mut() {
        fill_normal(w, spec.gain * (prev as f64).sqrt(), &mut rng);
        prev = w.rows();
    }
    fill_normal(&mut net.top, spec.gain * (prev as f64).sqrt(), &mut rng);
    net.seed = seed;
    Ok(net)
}

fn fill_normal(m: &mut Matrix, std: f64, rng: &mut ChaCha8Rng) {
    if std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("finite positive std");
    for v in m.as_mut_slice() {
        *v = normal.sample(rng);
    }
}

/// Cached quantities from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// `pre[i]` holds `g^(i+1)`.
    pub pre: Vec<Vec<f64>>,
    /// `post[i]` holds `f^(i+1) = h(g^(i+1))`.
    pub post: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ForwardTrace {
    /// Activations of layer `l` in `0..=L` (layer 0 is the input).
    pub fn features(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

/// Mean-field layer sum `(1/m_in) sum_k w_k f_k`, accumulated left to right.
#[inline]
pub(crate) fn mean_dot(w: &[f64], f: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in w.iter().zip(f) {
        s += a * b;
    }
    s / f.len() as f64
}

pub fn forward(net: &Network, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != net.input_dim {
        return Err(Error::dim("layer 0 (input)", net.input_dim, x.len()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input coordinate {i}")));
    }
    let act = net.activation;
    let mut pre = Vec::with_capacity(net.depth());
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(net.depth());
    for w in &net.weights {
        let prev = post.last().map_or(x, |v| v.as_slice());
        let g: Vec<f64> = (0..w.rows()).map(|j| mean_dot(w.row(j), prev)).collect();
        let f: Vec<f64> = g.iter().map(|&v| act.apply(v)).collect();
        pre.push(g);
        post.push(f);
    }
    let output = top_output(&net.top, post.last().expect("depth >= 1"));
    Ok(ForwardTrace {
        input: x.to_vec(),
        pre,
        post,
        output,
    })
}

/// `(1/m) sum_j u_j f_j`, accumulated in row order.
pub(crate) fn top_output(top: &Matrix, f: &[f64]) -> Vec<f64> {
    let k = top.cols();
    let mut out = vec![0.0; k];
    for (j, &fj) in f.iter().enumerate() {
        for (o, &u) in out.iter_mut().zip(top.row(j)) {
            *o += u * fj;
        }
    }
    let m = f.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
    out
}

/// Gradients of `<d_out, f(x)>` with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `weights[i]` is the gradient for `W^(i+1)`.
    pub weights: Vec<Matrix>,
    pub top: Matrix,
    /// `pre[i][j]` is `d<d_out, f>/d g^(i+1)_j`.
    pub pre: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            top: Matrix::zeros(net.top.rows(), net.top.cols()),
            pre: net.widths.iter().map(|&m| vec![0.0; m]).collect(),
        }
    }

    /// `self += c * other` over weight and top gradients.
    pub fn add_scaled(&mut self, other: &Gradients, c: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += c * y;
            }
        }
        for (x, y) in self.top.as_mut_slice().iter_mut().zip(other.top.as_slice()) {
            *x += c * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.top.is_finite()
    }
}

fn check_trace(net: &Network, trace: &ForwardTrace) -> Result<()> {
    if trace.input.len() != net.input_dim {
        return Err(Error::dim(
            "stale trace: input",
            net.input_dim,
            trace.input.len(),
        ));
    }
    if trace.pre.len() != net.depth() || trace.post.len() != net.depth() {
        return Err(Error::dim(
            "stale trace: depth",
            net.depth(),
            trace.pre.len(),
        ));
    }
    for (l, &m) in net.widths.iter().enumerate() {
        if trace.pre[l].len() != m || trace.post[l].len() != m {
            return Err(Error::dim(
                format!("stale trace: layer {}", l + 1),
                m,
                trace.pre[l].len(),
            ));
        }
    }
    if trace.output.len() != net.output_dim {
        return Err(Error::dim(
            "stale trace: output",
            net.output_dim,
            trace.output.len(),
        ));
    }
    Ok(())
}

/// Reverse sweep for `<d_out, f>`, filling parameter gradients and
/// pre-activation adjoints for layers `stop..=L` (1-based).
fn reverse(net: &Network, trace: &ForwardTrace, d_out: &[f64], stop: usize, grads: &mut Gradients) {
    let depth = net.depth();
    let act = net.activation;
    let m_top = net.width(depth) as f64;
    let f_top = &trace.post[depth - 1];

    // Top layer.
    for (j, &fj) in f_top.iter().enumerate() {
        for (g, &d) in grads.top.row_mut(j).iter_mut().zip(d_out) {
            *g = fj * d / m_top;
        }
    }
    // d<d_out,f>/d f^(L)_j
    let mut d_feat: Vec<f64> = (0..net.width(depth))
        .map(|j| {
            let mut s = 0.0;
            for (&u, &d) in net.top.row(j).iter().zip(d_out) {
                s += u * d;
            }
            s / m_top
        })
        .collect();

    for l in (stop..=depth).rev() {
        let i = l - 1;
        let d_pre: Vec<f64> = d_feat
            .iter()
            .zip(&trace.pre[i])
            .zip(&trace.post[i])
            .map(|((&df, &g), &f)| df * act.derivative_from(g, f))
            .collect();
        let prev = trace.features(l - 1);
        let m_in = prev.len() as f64;
        let w = &net.weights[i];
        let gw = &mut grads.weights[i];
        for (j, &dg) in d_pre.iter().enumerate() {
            for (g, &fk) in gw.row_mut(j).iter_mut().zip(prev) {
                *g = dg * fk / m_in;
            }
        }
        if l > stop {
            let mut next = vec![0.0; w.cols()];
            for (j, &dg) in d_pre.iter().enumerate() {
                for (n, &wjk) in next.iter_mut().zip(w.row(j)) {
                    *n += wjk * dg;
                }
            }
            next.iter_mut().for_each(|v| *v /= m_in);
            d_feat = next;
        }
        grads.pre[i] = d_pre;
    }
}

/// Gradients of `<d_out, f(x)>` for the input recorded in `trace`.
pub fn backward(net: &Network, trace: &ForwardTrace, d_out: &[f64]) -> Result<Gradients> {
    check_trace(net, trace)?;
    if d_out.len() != net.output_dim {
        return Err(Error::dim("output gradient", net.output_dim, d_out.len()));
    }
    let mut grads = Gradients::zeros_like(net);
    reverse(net, trace, d_out, 1, &mut grads);
    Ok(grads)
}

/// Sensitivities `a^(l)_i = d f / d g^(l)_i` as an `m^(l) x K` matrix.
///
/// Runs one reverse sweep per output component, stopping at layer `l`
/// (1-based), so the result carries every downstream `1/m` factor.
pub fn sensitivities(net: &Network, trace: &ForwardTrace, layer: usize) -> Result<Matrix> {
    check_trace(net, trace)?;
    if layer == 0 || layer > net.depth() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range 1..={}",
            net.depth()
        )));
    }
    let k = net.output_dim;
    let mut out = Matrix::zeros(net.width(layer), k);
    let mut grads = Gradients::zeros_like(net);
    let mut e = vec![0.0; k];
    for c in 0..k {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        reverse(net, trace, &e, layer, &mut grads);
        for (i, &a) in grads.pre[layer - 1].iter().enumerate() {
            out.set(i, c, a);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Network {
        crate::fixtures::two_layer()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(&NetworkSpec::new(3, vec![4, 2], 2, Activation::Tanh)).unwrap();
        let t = forward(&net, &[0.5, -1.0, 2.0]).unwrap();
        assert!(t.pre.iter().flatten().all(|&v| v == 0.0));
        assert!(t.post.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(t.output, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_chain_at_origin() {
        let net = Network::from_parts(
            1,
            Activation::Tanh,
            vec![Matrix::from_rows(&[[1.0]])],
            Matrix::from_rows(&[[1.0]]),
        )
        .unwrap();
        assert_eq!(net.predict(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn fixture_matches_hand_expansion() {
        let net = fixture();
        let x: [f64; 2] = [0.7, -1.3];
        let g11 = (0.3 * x[0] + -0.5 * x[1]) / 2.0;
        let g12 = (0.8 * x[0] + 0.1 * x[1]) / 2.0;
        let (f11, f12) = (g11.tanh(), g12.tanh());
        let g21 = (-0.4 * f11 + 0.9 * f12) / 2.0;
        let g22 = (0.6 * f11 + 0.2 * f12) / 2.0;
        let want = (1.1 * g21.tanh() + -0.7 * g22.tanh()) / 2.0;
        let got = net.predict(&x).unwrap()[0];
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn forward_rejects_bad_input_with_layer_name() {
        let err = forward(&fixture(), &[1.0]).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn from_parts_names_offending_layer() {
        let err = Network::from_parts(
            2,
            Activation::Tanh,
            vec![Matrix::zeros(3, 2), Matrix::zeros(2, 4)],
            Matrix::zeros(2, 1),
        )
        .unwrap_err();
        assert!(err.to_string().contains("layer 2"), "{err}");
    }

    #[test]
    fn zero_network_sensitivity_is_u_over_m() {
        let mut net =
            Network::zeros(&NetworkSpec::new(2, vec![3, 4], 1, Activation::Tanh)).unwrap();
        for (j, v) in net.top_mut().as_mut_slice().iter_mut().enumerate() {
            *v = j as f64 + 0.5;
        }
        let t = forward(&net, &[1.0, 2.0]).unwrap();
        let a = sensitivities(&net, &t, 2).unwrap();
        for j in 0..4 {
            assert_eq!(a.get(j, 0), (j as f64 + 0.5) / 4.0);
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let net = fixture();
        let other = Network::zeros(&NetworkSpec::new(2, vec![3, 2], 1, Activation::Tanh)).unwrap();
        let t = forward(&other, &[0.1, 0.2]).unwrap();
        assert!(backward(&net, &t, &[1.0]).is_err());
        assert!(sensitivities(&net, &t, 1).is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = NetworkSpec::new(2, vec![5, 3], 2, Activation::Tanh);
        let a = init_network(&spec, 11).unwrap();
        let b = init_network(&spec, 11).unwrap();
        let c = init_network(&spec, 12).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn zero_gain_gives_zero_network() {
        let spec = NetworkSpec::new(2, vec![5], 1, Activation::Tanh).with_gain(0.0);
        let net = init_network(&spec, 3).unwrap();
        assert_eq!(net.top().max_abs(), 0.0);
    }
}
