//! Read-only analyses of a trained network: approximation variance, KKT
//! balance pairs, weight-sparsity CDFs and per-neuron feature functions.

use std::path::Path;

use crate::batch::BatchWorkspace;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvOut};
use crate::matrix::Matrix;
use crate::net::Network;
use crate::regularizer::RegularizerSpec;

/// Rows processed per batched evaluation.
const CHUNK: usize = 256;

/// Per-term breakdown of the approximation variance `V(w, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTerms {
    /// `layers[i]` is the term for hidden layer `l = i + 2`, i.e. the
    /// contribution of sampling layer `l - 1`.
    pub layers: Vec<f64>,
    /// `(1/m_L^2) sum_j ||u_j f_j - f||^2`
    pub top: f64,
}

impl VarianceTerms {
    pub fn total(&self) -> f64 {
        self.layers.iter().sum::<f64>() + self.top
    }
}

/// Approximation variance of discretization, averaged over `xs`:
///
/// ```text
/// V = E_x [ sum_{l=2..L} (1/m_{l-1}^2) sum_j || sum_i a^(l)_i (f^(l-1)_j w^(l)_{i,j} - g^(l)_i) ||^2
///         + (1/m_L^2) sum_j || u_j f^(L)_j - f ||^2 ]
/// ```
///
/// with `a^(l)_i = d f / d g^(l)_i`.
pub fn approx_variance(net: &Network, xs: &[Vec<f64>]) -> Result<f64> {
    Ok(approx_variance_terms(net, xs)?.total())
}

/// [`approx_variance`] split into its per-layer and top terms.
pub fn approx_variance_terms(net: &Network, xs: &[Vec<f64>]) -> Result<VarianceTerms> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty input batch".into()));
    }
    let d = net.input_dim();
    let depth = net.depth();
    let k = net.output_dim();
    let mut layer_sums = vec![0.0; depth.saturating_sub(1)];
    let mut top_sum = 0.0;

    let mut ws = BatchWorkspace::new();
    let mut d_weights: Vec<Matrix> = net
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut d_top = Matrix::zeros(net.top().rows(), k);

    for chunk in xs.chunks(CHUNK) {
        let rows = chunk.len();
        let mut x = Vec::with_capacity(rows * d);
        for xi in chunk {
            if xi.len() != d {
                return Err(Error::dim("layer 0 (input)", d, xi.len()));
            }
            x.extend_from_slice(xi);
        }
        ws.forward(net, &x);
        let out = ws.output().to_vec();

        // Top term.
        let m_top = net.width(depth);
        let f_top = ws.features(depth);
        for b in 0..rows {
            let mut s = 0.0;
            for j in 0..m_top {
                let fj = f_top[b * m_top + j];
                for (c, &u) in net.top().row(j).iter().enumerate() {
                    let r = u * fj - out[b * k + c];
                    s += r * r;
                }
            }
            top_sum += s / (m_top * m_top) as f64;
        }
        if depth < 2 {
            continue;
        }

        // sens[l][(b * m_l + i) * k + c] = a^(l)_i(x_b)[c]
        let mut sens: Vec<Vec<f64>> = net
            .widths()
            .iter()
            .map(|&m| vec![0.0; rows * m * k])
            .collect();
        let mut e = vec![0.0; rows * k];
        for c in 0..k {
            e.iter_mut()
                .enumerate()
                .for_each(|(t, v)| *v = if t % k == c { 1.0 } else { 0.0 });
            ws.backward(net, &x, &e, &mut d_weights, &mut d_top, 0.0);
            for (l, s) in sens.iter_mut().enumerate() {
                for (t, &a) in ws.d_pre[l].iter().enumerate() {
                    s[t * k + c] = a;
                }
            }
        }

        for l in 2..=depth {
            let w = &net.weights()[l - 1];
            let (m, m_prev) = w.shape();
            let a = &sens[l - 1];
            let g = &ws.pre[l - 1];
            let f_prev = ws.features(l - 1);
            let mut bvec = vec![0.0; m_prev * k];
            for b in 0..rows {
                // bvec[j][c] = sum_i a_i[c] w_ij ; cvec[c] = sum_i a_i[c] g_i
                bvec.iter_mut().for_each(|v| *v = 0.0);
                let mut cvec = vec![0.0; k];
                for i in 0..m {
                    let ai = &a[(b * m + i) * k..(b * m + i + 1) * k];
                    let gi = g[b * m + i];
                    for (c, &aic) in ai.iter().enumerate() {
                        cvec[c] += aic * gi;
                    }
                    for (j, &wij) in w.row(i).iter().enumerate() {
                        for (c, &aic) in ai.iter().enumerate() {
                            bvec[j * k + c] += aic * wij;
                        }
                    }
                }
                let mut s = 0.0;
                for j in 0..m_prev {
                    let fj = f_prev[b * m_prev + j];
                    for c in 0..k {
                        let r = fj * bvec[j * k + c] - cvec[c];
                        s += r * r;
                    }
                }
                layer_sums[l - 2] += s / (m_prev * m_prev) as f64;
            }
        }
    }
    let n = xs.len() as f64;
    Ok(VarianceTerms {
        layers: layer_sums.into_iter().map(|s| s / n).collect(),
        top: top_sum / n,
    })
}

/// Per-neuron regularizer-balance quantities for the stationarity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktPair {
    /// 1-based hidden layer.
    pub layer: usize,
    pub neuron: usize,
    pub u_val: f64,
    pub v_val: f64,
}

/// KKT balance pairs of hidden layer `layer` (1-based), for the `l_{1,2}` family.
///
/// With rows on the output side,
/// `u_j = lambda^(l) / (m^(l) m^(l-1)) sum_k (sum_{j'} |w_{j',k}|) |w_{j,k}|` and
/// `v_j = lambda^(l+1) ((1/m^(l+1)) sum_i |w^(l+1)_{i,j}|)^2`, or
/// `lambda_u ||u_j||^2` on the top hidden layer.
pub fn kkt_pairs(net: &Network, spec: &RegularizerSpec, layer: usize) -> Result<Vec<KktPair>> {
    let depth = net.depth();
    if layer == 0 || layer > depth {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range 1..={depth}"
        )));
    }
    spec.validate(depth)?;
    let w = &net.weights()[layer - 1];
    let (m, m_prev) = w.shape();
    let mut col = vec![0.0; m_prev];
    for j in 0..m {
        for (c, v) in col.iter_mut().zip(w.row(j)) {
            *c += v.abs();
        }
    }
    let lambda = spec.lambdas[layer - 1];
    let scale = lambda / (m as f64 * m_prev as f64);
    let mut pairs = Vec::with_capacity(m);
    for j in 0..m {
        let mut s = 0.0;
        for (c, v) in col.iter().zip(w.row(j)) {
            s += c * v.abs();
        }
        let v_val = if layer < depth {
            let next = &net.weights()[layer];
            let m_next = next.rows() as f64;
            let mean = (0..next.rows()).map(|i| next.get(i, j).abs()).sum::<f64>() / m_next;
            spec.lambdas[layer] * mean * mean
        } else {
            spec.lambda_u * net.top().row(j).iter().map(|u| u * u).sum::<f64>()
        };
        pairs.push(KktPair {
            layer,
            neuron: j,
            u_val: scale * s,
            v_val,
        });
    }
    Ok(pairs)
}

/// Pearson correlation between `u_val` and `v_val` across pairs.
pub fn pearson(pairs: &[KktPair]) -> Result<f64> {
    let xs: Vec<f64> = pairs.iter().map(|p| p.u_val).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.v_val).collect();
    pearson_xy(&xs, &ys)
}

pub fn pearson_xy(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::dim("pearson inputs", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateScatter("fewer than two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateScatter(
            "zero variance in one coordinate".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of entries with `|w| <= t` for each threshold `t`.
pub fn sparsity_cdf(w: &Matrix, thresholds: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = w.as_slice().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| mags.partition_point(|&a| a <= t) as f64 / n)
        .collect()
}

/// `count` evenly spaced thresholds from 0 to `max |w|`.
pub fn default_thresholds(w: &Matrix, count: usize) -> Vec<f64> {
    let max = w.max_abs();
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count)
            .map(|i| max * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Median of `|w|` pooled over several matrices.
pub fn pooled_median_abs(mats: &[&Matrix]) -> f64 {
    let mut all: Vec<f64> = mats
        .iter()
        .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
        .collect();
    if all.is_empty() {
        return 0.0;
    }
    all.sort_by(f64::total_cmp);
    let n = all.len();
    if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    }
}

/// Feature values `f^(l)_j(x)` for hidden layer `layer` (1-based): rows are
/// grid points, columns follow `neuron_ids`.
pub fn feature_functions(
    net: &Network,
    layer: usize,
    grid: &[Vec<f64>],
    neuron_ids: &[usize],
) -> Result<Matrix> {
    let depth = net.depth();
    if layer == 0 || layer > depth {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range 1..={depth}"
        )));
    }
    let m = net.width(layer);
    if let Some(&bad) = neuron_ids.iter().find(|&&j| j >= m) {
        return Err(Error::InvalidArgument(format!(
            "neuron {bad} out of range for width {m}"
        )));
    }
    let d = net.input_dim();
    let mut out = Matrix::zeros(grid.len(), neuron_ids.len());
    let mut ws = BatchWorkspace::new();
    for (c, chunk) in grid.chunks(CHUNK).enumerate() {
        let mut x = Vec::with_capacity(chunk.len() * d);
        for xi in chunk {
            if xi.len() != d {
                return Err(Error::dim("layer 0 (input)", d, xi.len()));
            }
            x.extend_from_slice(xi);
        }
        ws.forward(net, &x);
        let f = ws.features(layer);
        for b in 0..chunk.len() {
            for (col, &j) in neuron_ids.iter().enumerate() {
                out.set(c * CHUNK + b, col, f[b * m + j]);
            }
        }
    }
    Ok(out)
}

/// Writes `kkt_layer<l>.csv` with columns `neuron,u_val,v_val`.
pub fn write_kkt_csv(dir: &Path, force: bool, pairs: &[KktPair], layer: usize) -> Result<()> {
    let mut out = CsvOut::create(
        &dir.join(format!("kkt_layer{layer}.csv")),
        force,
        &["neuron", "u_val", "v_val"],
    )?;
    for p in pairs {
        out.row(&[p.neuron.to_string(), fmt_f64(p.u_val), fmt_f64(p.v_val)])?;
    }
    out.finish()
}

/// Writes `sparsity_layer<l>.csv` with columns `threshold,fraction`.
pub fn write_sparsity_csv(
    dir: &Path,
    force: bool,
    layer: usize,
    thresholds: &[f64],
    fractions: &[f64],
) -> Result<()> {
    let mut out = CsvOut::create(
        &dir.join(format!("sparsity_layer{layer}.csv")),
        force,
        &["threshold", "fraction"],
    )?;
    for (t, f) in thresholds.iter().zip(fractions) {
        out.row(&[fmt_f64(*t), fmt_f64(*f)])?;
    }
    out.finish()
}

/// Writes `features_layer<l>.csv` with columns `x,f_<j1>,f_<j2>,...`, where
/// `x` is the first input coordinate of each grid point.
pub fn write_features_csv(
    dir: &Path,
    force: bool,
    layer: usize,
    grid: &[Vec<f64>],
    neuron_ids: &[usize],
    values: &Matrix,
) -> Result<()> {
    let mut header = vec!["x".to_owned()];
    header.extend(neuron_ids.iter().map(|j| format!("f_{j}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(
        &dir.join(format!("features_layer{layer}.csv")),
        force,
        &header_refs,
    )?;
    for (r, xi) in grid.iter().enumerate() {
        let mut row = vec![fmt_f64(xi[0])];
        row.extend(values.row(r).iter().map(|v| fmt_f64(*v)));
        out.row(&row)?;
    }
    out.finish()
}

/// Writes `variance.csv` with columns `epoch,V`.
pub fn write_variance_csv(dir: &Path, force: bool, rows: &[(usize, f64)]) -> Result<()> {
    let mut out = CsvOut::create(&dir.join("variance.csv"), force, &["epoch", "V"])?;
    for (e, v) in rows {
        out.row(&[e.to_string(), fmt_f64(*v)])?;
    }
    out.finish()
}
