//! Importance weights, the proximal-gradient weight solver and the discrete
//! feature-repopulation resampler.
//!
//! Weights for hidden layer `l` are stored with `sum_j p_j = m^(l)`, so the
//! neutral element is `p = 1` and sampling probabilities are `p_j / m^(l)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvOut};
use crate::net::Network;
use crate::regularizer::{weighted_reg, weighted_reg_grad_p, RegularizerSpec};

/// Lower bound on every importance weight.
pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Relative tolerance on `sum_j p_j = m`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Per hidden layer importance weights `p^(l)`, `l = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    layers: Vec<Vec<f64>>,
}

impl ImportanceWeights {
    /// `p = 1` on every hidden layer of `net`.
    pub fn uniform(net: &Network) -> Self {
        Self {
            layers: net.widths().iter().map(|&m| vec![1.0; m]).collect(),
        }
    }

    /// Validated constructor: every entry positive and finite, every layer summing to its width.
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self::from_raw(layers)?;
        for (i, l) in p.layers.iter().enumerate() {
            let sum: f64 = l.iter().sum();
            let m = l.len() as f64;
            if (sum - m).abs() > SUM_TOLERANCE * m {
                return Err(Error::InvalidWeights {
                    layer: i + 1,
                    reason: format!("sum {sum} differs from width {m}"),
                });
            }
        }
        Ok(p)
    }

    /// Positivity-checked constructor that does not enforce the layer sums.
    pub fn from_raw(layers: Vec<Vec<f64>>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidWeights {
                    layer: i + 1,
                    reason: "empty layer".into(),
                });
            }
            if let Some(j) = l.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidWeights {
                    layer: i + 1,
                    reason: format!("entry {j} = {} is not positive", l[j]),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Weights of hidden layer `l` (1-based).
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Checks that shapes match `net` (positivity holds by construction).
    pub fn validate_for(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.depth() {
            return Err(Error::dim(
                "importance weights depth",
                net.depth(),
                self.layers.len(),
            ));
        }
        for (i, (l, &m)) in self.layers.iter().zip(net.widths()).enumerate() {
            if l.len() != m {
                return Err(Error::InvalidWeights {
                    layer: i + 1,
                    reason: format!("length {} differs from width {m}", l.len()),
                });
            }
        }
        Ok(())
    }

    /// Writes `p_layer<l>.csv` with columns `neuron_index,p_value` for every hidden layer.
    pub fn write_csv(&self, dir: &Path, force: bool) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = CsvOut::create(
                &dir.join(format!("p_layer{}.csv", i + 1)),
                force,
                &["neuron_index", "p_value"],
            )?;
            for (j, v) in l.iter().enumerate() {
                out.row(&[j.to_string(), fmt_f64(*v)])?;
            }
            out.finish()?;
        }
        Ok(())
    }
}

/// Evaluates the importance-weighted form of the network. Algebraically equal
/// to the plain forward pass.
pub fn weighted_forward(net: &Network, p: &ImportanceWeights, x: &[f64]) -> Result<Vec<f64>> {
    p.validate_for(net)?;
    if x.len() != net.input_dim() {
        return Err(Error::dim("layer 0 (input)", net.input_dim(), x.len()));
    }
    let act = net.activation();
    let mut f = x.to_vec();
    for (i, w) in net.weights().iter().enumerate() {
        let m_in = f.len() as f64;
        let p_in: Option<&[f64]> = (i > 0).then(|| p.layer(i));
        let next: Vec<f64> = (0..w.rows())
            .map(|j| {
                let mut s = 0.0;
                for (k, (&wjk, &fk)) in w.row(j).iter().zip(&f).enumerate() {
                    let pk = p_in.map_or(1.0, |p| p[k]);
                    s += (wjk / pk) * (pk * fk);
                }
                act.apply(s / m_in)
            })
            .collect();
        f = next;
    }
    let top = net.top();
    let p_top = p.layer(net.depth());
    let mut out = vec![0.0; top.cols()];
    for (j, &fj) in f.iter().enumerate() {
        let pj = p_top[j];
        for (o, &u) in out.iter_mut().zip(top.row(j)) {
            *o += (u / pj) * (pj * fj);
        }
    }
    let m = f.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
    Ok(out)
}

/// Euclidean projection onto `{p : p_j >= floor, sum_j p_j = total}`
/// by the sorted-threshold method.
pub fn project_scaled_simplex(v: &[f64], total: f64, floor: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n == 0 || !total.is_finite() || !floor.is_finite() || total < n as f64 * floor {
        return Err(Error::InfeasibleProjection {
            total,
            len: n,
            floor,
        });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("projection input entry {i}")));
    }
    let sum: f64 = v.iter().sum();
    if v.iter().all(|&x| x >= floor) && (sum - total).abs() <= 1e-15 * total.abs().max(1.0) {
        return Ok(v.to_vec());
    }
    // Shift so the constraint becomes q >= 0, sum q = budget.
    let budget = total - n as f64 * floor;
    let mut sorted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - budget) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter()
        .map(|&x| (x - floor - theta).max(0.0) + floor)
        .collect())
}

/// Settings for the proximal-gradient importance-weight solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxConfig {
    /// Initial step size.
    pub step: f64,
    /// Maximum number of accepted iterations.
    pub max_iters: usize,
    /// Stop once an accepted step decreases the objective by less than
    /// `tol * |objective|`.
    pub tol: f64,
    /// Lower bound on every weight.
    pub floor: f64,
    /// Step multiplier applied after each accepted iteration.
    pub growth: f64,
    /// Consecutive halvings allowed within one iteration before giving up.
    pub max_halvings: usize,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_iters: 500,
            tol: 1e-10,
            floor: DEFAULT_FLOOR,
            growth: 2.0,
            max_halvings: 30,
        }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.step.is_finite()
            && self.tol >= 0.0
            && self.floor > 0.0
            && self.growth >= 1.0
            && self.growth.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid prox config {self:?}"
            )))
        }
    }
}

/// Result of [`solve_weights_traced`].
#[derive(Debug, Clone)]
pub struct ProxSolution {
    pub weights: ImportanceWeights,
    /// Objective at `p = 1` followed by the objective after each accepted iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes the importance-weighted regularizer over `p` starting from `p = 1`.
pub fn solve_weights(
    net: &Network,
    spec: &RegularizerSpec,
    cfg: &ProxConfig,
) -> Result<ImportanceWeights> {
    Ok(solve_weights_traced(net, spec, cfg)?.weights)
}

/// [`solve_weights`] that also reports the objective sequence.
///
/// Each iteration tries `p <- project(p - step * grad)`; an increase of the
/// objective halves the step and retries, so accepted objectives never
/// increase.
pub fn solve_weights_traced(
    net: &Network,
    spec: &RegularizerSpec,
    cfg: &ProxConfig,
) -> Result<ProxSolution> {
    cfg.validate()?;
    spec.validate(net.depth())?;
    let mut p = ImportanceWeights::uniform(net);
    let mut obj = weighted_reg(net, spec, &p)?;
    let mut history = vec![obj];
    let mut step = cfg.step;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iters {
        let grad = weighted_reg_grad_p(net, spec, &p)?;
        if grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "importance-weight gradient at iteration {iterations}"
            )));
        }
        let mut halvings = 0;
        let (cand, cand_obj) = loop {
            let layers = p
                .layers()
                .iter()
                .zip(&grad)
                .map(|(pl, gl)| {
                    let v: Vec<f64> = pl.iter().zip(gl).map(|(a, g)| a - step * g).collect();
                    project_scaled_simplex(&v, pl.len() as f64, cfg.floor)
                })
                .collect::<Result<Vec<_>>>()?;
            let cand = ImportanceWeights::from_raw(layers)?;
            let cand_obj = weighted_reg(net, spec, &cand)?;
            if cand_obj <= obj {
                break (cand, cand_obj);
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                break 'outer;
            }
            step *= 0.5;
        };
        let decrease = obj - cand_obj;
        let moved = cand != p;
        p = cand;
        obj = cand_obj;
        history.push(obj);
        iterations += 1;
        if !moved || decrease <= cfg.tol * obj.abs() {
            break;
        }
        step *= cfg.growth;
    }
    Ok(ProxSolution {
        weights: p,
        objective: history,
        iterations,
    })
}

/// Draws `count` indices i.i.d. from the categorical distribution proportional to `p`,
/// by inverse CDF over the cumulative sums.
pub(crate) fn sample_categorical(p: &[f64], count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cum.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            cum.partition_point(|&c| c <= r).min(p.len() - 1)
        })
        .collect()
}

/// Discrete feature repopulation: resamples every hidden layer from `p`.
///
/// Layers are processed from `L` down to 1. Slot `j` of layer `l` receives the
/// incoming row of a sampled neuron `j'` verbatim, and that neuron's outgoing
/// weights (column `j'` of `W^(l+1)`, or row `j'` of `U` at the top) divided by
/// `p_{j'}`. Widths are unchanged and duplicates are kept as separate neurons.
pub fn resample(net: &Network, p: &ImportanceWeights, seed: u64) -> Result<Network> {
    Ok(resample_with_indices(net, p, seed)?.0)
}

/// [`resample`] that also returns the sampled source index for every slot,
/// per hidden layer (`indices[l-1][j] = j'`).
pub fn resample_with_indices(
    net: &Network,
    p: &ImportanceWeights,
    seed: u64,
) -> Result<(Network, Vec<Vec<usize>>)> {
    p.validate_for(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = net.depth();
    let mut out = net.clone();
    let mut indices = vec![Vec::new(); depth];
    for l in (1..=depth).rev() {
        let pl = p.layer(l);
        let m = pl.len();
        let idx = sample_categorical(pl, m, &mut rng);

        let src_w = out.weights()[l - 1].clone();
        let w = &mut out.weights_mut()[l - 1];
        for (j, &s) in idx.iter().enumerate() {
            w.row_mut(j).copy_from_slice(src_w.row(s));
        }

        if l == depth {
            let src_u = out.top().clone();
            let u = out.top_mut();
            for (j, &s) in idx.iter().enumerate() {
                let scale = 1.0 / pl[s];
                for (d, &v) in u.row_mut(j).iter_mut().zip(src_u.row(s)) {
                    *d = v * scale;
                }
            }
        } else {
            let src_next = out.weights()[l].clone();
            let next = &mut out.weights_mut()[l];
            for (j, &s) in idx.iter().enumerate() {
                let scale = 1.0 / pl[s];
                for i in 0..next.rows() {
                    next.set(i, j, src_next.get(i, s) * scale);
                }
            }
        }
        indices[l - 1] = idx;
    }
    Ok((out, indices))
}
