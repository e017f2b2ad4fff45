//! Batched forward/backward over row-major sample blocks using a blocked GEMM.
//!
//! Results agree with the per-sample path in [`crate::net`] up to rounding;
//! the summation order inside the GEMM kernel is fixed, so repeated calls are
//! bit-identical.

use crate::matrix::{gemm, Matrix};
use crate::net::Network;

/// Reusable buffers for one batch.
#[derive(Debug, Default, Clone)]
pub struct BatchWorkspace {
    rows: usize,
    /// `pre[i]` is `rows x m^(i+1)`.
    pub(crate) pre: Vec<Vec<f64>>,
    pub(crate) post: Vec<Vec<f64>>,
    pub(crate) out: Vec<f64>,
    d_feat: Vec<f64>,
    d_prev: Vec<f64>,
    /// `d_pre[i]` is the adjoint of `pre[i]` after [`BatchWorkspace::backward`].
    pub(crate) d_pre: Vec<Vec<f64>>,
}

impl BatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn resize(&mut self, net: &Network, rows: usize) {
        self.rows = rows;
        let depth = net.depth();
        self.pre.resize_with(depth, Vec::new);
        self.post.resize_with(depth, Vec::new);
        self.d_pre.resize_with(depth, Vec::new);
        for (i, &m) in net.widths().iter().enumerate() {
            self.pre[i].resize(rows * m, 0.0);
            self.post[i].resize(rows * m, 0.0);
            self.d_pre[i].resize(rows * m, 0.0);
        }
        self.out.resize(rows * net.output_dim(), 0.0);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Outputs of the last forward call, `rows x K` row-major.
    pub fn output(&self) -> &[f64] {
        &self.out
    }

    /// Activations of hidden layer `l` (1-based) from the last forward call.
    pub fn features(&self, l: usize) -> &[f64] {
        &self.post[l - 1]
    }

    /// Forward pass over `x` (`rows x d`, row-major).
    pub fn forward(&mut self, net: &Network, x: &[f64]) {
        let d = net.input_dim();
        assert_eq!(x.len() % d, 0, "batch input length");
        let rows = x.len() / d;
        self.resize(net, rows);
        let act = net.activation();
        for (i, w) in net.weights().iter().enumerate() {
            let (m, m_in) = w.shape();
            let (before, after) = self.post.split_at_mut(i);
            let prev: &[f64] = if i == 0 { x } else { &before[i - 1] };
            let g = &mut self.pre[i];
            gemm(
                rows,
                m_in,
                m,
                1.0 / m_in as f64,
                prev,
                false,
                w.as_slice(),
                true,
                0.0,
                g,
            );
            for (f, &v) in after[0].iter_mut().zip(g.iter()) {
                *f = act.apply(v);
            }
        }
        let top = net.top();
        let (m_top, k) = top.shape();
        let f_top = self.post.last().expect("depth >= 1");
        gemm(
            rows,
            m_top,
            k,
            1.0 / m_top as f64,
            f_top,
            false,
            top.as_slice(),
            false,
            0.0,
            &mut self.out,
        );
    }

    /// Accumulates the gradient of `sum_b <d_out_b, f(x_b)>` into `d_weights`
    /// and `d_top` (scaled by `beta` first, so `beta = 0` overwrites), and
    /// leaves pre-activation adjoints in `self.d_pre`.
    ///
    /// Must follow [`BatchWorkspace::forward`] on the same `net` and `x`.
    pub fn backward(
        &mut self,
        net: &Network,
        x: &[f64],
        d_out: &[f64],
        d_weights: &mut [Matrix],
        d_top: &mut Matrix,
        beta: f64,
    ) {
        let rows = self.rows;
        let depth = net.depth();
        let act = net.activation();
        let top = net.top();
        let (m_top, k) = top.shape();
        assert_eq!(d_out.len(), rows * k, "output adjoint length");

        let f_top = &self.post[depth - 1];
        gemm(
            m_top,
            rows,
            k,
            1.0 / m_top as f64,
            f_top,
            true,
            d_out,
            false,
            beta,
            d_top.as_mut_slice(),
        );
        self.d_feat.resize(rows * m_top, 0.0);
        gemm(
            rows,
            k,
            m_top,
            1.0 / m_top as f64,
            d_out,
            false,
            top.as_slice(),
            true,
            0.0,
            &mut self.d_feat,
        );

        for i in (0..depth).rev() {
            let w = &net.weights()[i];
            let (m, m_in) = w.shape();
            let dg = &mut self.d_pre[i];
            for ((d, &df), (&g, &f)) in dg
                .iter_mut()
                .zip(&self.d_feat)
                .zip(self.pre[i].iter().zip(&self.post[i]))
            {
                *d = df * act.derivative_from(g, f);
            }
            let prev: &[f64] = if i == 0 { x } else { &self.post[i - 1] };
            gemm(
                m,
                rows,
                m_in,
                1.0 / m_in as f64,
                dg,
                true,
                prev,
                false,
                beta,
                d_weights[i].as_mut_slice(),
            );
            if i > 0 {
                self.d_prev.resize(rows * m_in, 0.0);
                gemm(
                    rows,
                    m,
                    m_in,
                    1.0 / m_in as f64,
                    dg,
                    false,
                    w.as_slice(),
                    false,
                    0.0,
                    &mut self.d_prev,
                );
                std::mem::swap(&mut self.d_feat, &mut self.d_prev);
            }
        }
    }
}

/// Network outputs for a block of inputs (`rows x d`), returned `rows x K`.
pub fn predict_batch(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut ws = BatchWorkspace::new();
    ws.forward(net, x);
    ws.out
}
