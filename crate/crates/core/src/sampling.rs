//! Monte-Carlo checks of discretization error: a wide "master" network plays
//! the continuous limit, and narrow networks are drawn from it by sampling
//! hidden units uniformly with replacement.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::predict_batch;
use crate::diagnostics::approx_variance_terms;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_text, CsvOut};
use crate::matrix::Matrix;
use crate::net::Network;

/// A finite network whose uniform distribution over hidden units stands in
/// for the continuous feature distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSurrogate {
    net: Network,
}

impl MasterSurrogate {
    pub fn new(net: Network) -> Self {
        Self { net }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    /// Widens `net` by copying every hidden unit `factor` times.
    ///
    /// Copies sit in consecutive slots and share incoming and outgoing
    /// weights, so the mean-field output is unchanged and the unit
    /// distribution is the same as that of `net`.
    pub fn replicate(net: &Network, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument(
                "replication factor must be >= 1".into(),
            ));
        }
        let mut weights = Vec::with_capacity(net.depth());
        for (i, w) in net.weights().iter().enumerate() {
            let col_factor = if i == 0 { 1 } else { factor };
            let (m, n) = w.shape();
            weights.push(Matrix::from_fn(m * factor, n * col_factor, |r, c| {
                w.get(r / factor, c / col_factor)
            }));
        }
        let top = net.top();
        let top = Matrix::from_fn(top.rows() * factor, top.cols(), |r, c| {
            top.get(r / factor, c)
        });
        Ok(Self::new(
            Network::from_parts(net.input_dim(), net.activation(), weights, top)?
                .with_seed(net.seed()),
        ))
    }

    /// Draws a network with hidden widths `widths`; see [`subsample_with_indices`].
    pub fn subsample(&self, widths: &[usize], seed: u64) -> Result<Network> {
        Ok(self.subsample_with_indices(widths, seed)?.0)
    }

    /// Samples `widths[l-1]` unit indices per hidden layer uniformly with
    /// replacement (layers in order `1..=L`) and gathers
    /// `w_{i,j} = W_master[idx_i, idx_prev_j]`, `u_j = U_master[idx_L_j]`.
    pub fn subsample_with_indices(
        &self,
        widths: &[usize],
        seed: u64,
    ) -> Result<(Network, Vec<Vec<usize>>)> {
        let net = &self.net;
        if widths.len() != net.depth() {
            return Err(Error::dim("subsample widths", net.depth(), widths.len()));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "subsample widths must be >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<Vec<usize>> = widths
            .iter()
            .zip(net.widths())
            .map(|(&m, &big)| (0..m).map(|_| rng.random_range(0..big)).collect())
            .collect();
        let mut weights = Vec::with_capacity(widths.len());
        for (l, w) in net.weights().iter().enumerate() {
            let rows = &indices[l];
            let mat = if l == 0 {
                Matrix::from_fn(rows.len(), w.cols(), |i, j| w.get(rows[i], j))
            } else {
                let cols = &indices[l - 1];
                Matrix::from_fn(rows.len(), cols.len(), |i, j| w.get(rows[i], cols[j]))
            };
            weights.push(mat);
        }
        let last = &indices[widths.len() - 1];
        let top = Matrix::from_fn(last.len(), net.output_dim(), |j, c| {
            net.top().get(last[j], c)
        });
        let sub =
            Network::from_parts(net.input_dim(), net.activation(), weights, top)?.with_seed(seed);
        Ok((sub, indices))
    }
}

/// Error statistics at one subsample width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub m: usize,
    pub trials: usize,
    /// Mean over trials of `E_x ||f_hat(x) - f(x)||`.
    pub mean_l1: f64,
    /// Standard error of `mean_l1`; absent for a single trial.
    pub se_l1: Option<f64>,
    /// Mean over trials of `E_x ||f_hat(x) - f(x)||^2`.
    pub mean_mse: f64,
    pub se_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub widths: Vec<WidthStats>,
    /// Least-squares slope of `ln mean_mse` against `ln m`; absent with fewer
    /// than two widths or any zero MSE.
    pub slope: Option<f64>,
}

/// Settings shared by the two studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Subsample widths; every hidden layer gets the same width.
    pub widths: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the global pool.
    pub threads: usize,
}

impl StudyConfig {
    pub fn new(widths: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            widths,
            trials,
            seed,
            threads: 0,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

/// Seed for trial `trial` at width position `wi`.
pub fn trial_seed(seed: u64, wi: usize, trial: usize) -> u64 {
    let mut z = splitmix(seed ^ splitmix(wi as u64 + 1));
    z = splitmix(z ^ (trial as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476C_E5B9_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn flatten(xs: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty input batch".into()));
    }
    let mut out = Vec::with_capacity(xs.len() * d);
    for x in xs {
        if x.len() != d {
            return Err(Error::dim("layer 0 (input)", d, x.len()));
        }
        out.extend_from_slice(x);
    }
    Ok(out)
}

fn mean_se(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Runs both error statistics for every width. Trials are independent and
/// seeded by [`trial_seed`], and results are aggregated in trial order, so
/// the outcome does not depend on the thread count.
pub fn run_study(
    master: &MasterSurrogate,
    cfg: &StudyConfig,
    xs: &[Vec<f64>],
) -> Result<StudyResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let net = master.network();
    let k = net.output_dim();
    let x = flatten(xs, net.input_dim())?;
    let f = predict_batch(net, &x);
    let n = xs.len() as f64;

    let run_width = |wi: usize, m: usize| -> Result<WidthStats> {
        let widths = vec![m; net.depth()];
        let per_trial = |t: usize| -> Result<(f64, f64)> {
            let sub = master.subsample(&widths, trial_seed(cfg.seed, wi, t))?;
            let fh = predict_batch(&sub, &x);
            let (mut l1, mut l2) = (0.0, 0.0);
            for (a, b) in fh.chunks(k).zip(f.chunks(k)) {
                let sq: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                l1 += sq.sqrt();
                l2 += sq;
            }
            Ok((l1 / n, l2 / n))
        };
        let results: Vec<(f64, f64)> = if cfg.threads == 1 {
            (0..cfg.trials).map(per_trial).collect::<Result<_>>()?
        } else {
            (0..cfg.trials)
                .into_par_iter()
                .map(per_trial)
                .collect::<Result<_>>()?
        };
        let l1: Vec<f64> = results.iter().map(|r| r.0).collect();
        let l2: Vec<f64> = results.iter().map(|r| r.1).collect();
        let (mean_l1, se_l1) = mean_se(&l1);
        let (mean_mse, se_mse) = mean_se(&l2);
        Ok(WidthStats {
            m,
            trials: cfg.trials,
            mean_l1,
            se_l1,
            mean_mse,
            se_mse,
        })
    };

    let body = || -> Result<Vec<WidthStats>> {
        cfg.widths
            .iter()
            .enumerate()
            .map(|(wi, &m)| run_width(wi, m))
            .collect()
    };
    let widths = if cfg.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(body)?
    } else {
        body()?
    };

    let slope = if widths.iter().all(|w| w.mean_mse > 0.0) {
        let lx: Vec<f64> = widths.iter().map(|w| (w.m as f64).ln()).collect();
        let ly: Vec<f64> = widths.iter().map(|w| w.mean_mse.ln()).collect();
        fit_slope(&lx, &ly)
    } else {
        None
    };
    Ok(StudyResult { widths, slope })
}

/// Mean distance `E||f_hat - f||` per width. Requires increasing widths.
pub fn consistency_study(
    master: &MasterSurrogate,
    cfg: &StudyConfig,
    xs: &[Vec<f64>],
) -> Result<StudyResult> {
    check_increasing(&cfg.widths)?;
    run_study(master, cfg, xs)
}

/// Mean squared error `E||f_hat - f||^2` per width with the log-log slope.
pub fn variance_study(
    master: &MasterSurrogate,
    cfg: &StudyConfig,
    xs: &[Vec<f64>],
) -> Result<StudyResult> {
    check_increasing(&cfg.widths)?;
    run_study(master, cfg, xs)
}

fn check_increasing(widths: &[usize]) -> Result<()> {
    if widths.is_empty() || widths.windows(2).any(|w| w[0] >= w[1]) || widths[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "widths must be positive and increasing, got {widths:?}"
        )));
    }
    Ok(())
}

/// Leading-order constants of the discretization error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingTerms {
    /// `layers[l-1]` is `C_l` for `l = 1..L-1`.
    pub layers: Vec<f64>,
    pub top: f64,
}

impl LeadingTerms {
    pub fn total(&self) -> f64 {
        self.layers.iter().sum::<f64>() + self.top
    }
}

/// Leading terms of `E||f_hat - f||^2 ~ (sum_l C_l + C_top) / m` for equal
/// subsample widths `m`, with expectations over master units.
///
/// With `s_i = h'(g^(l+1)_i) df/dz^(l+1)_i` and the backward recursion
/// `df/dz^(l)_j = E_i[w_{i,j} h'(g^(l+1)_i) df/dz^(l+1)_i]`, `df/dz^(L)_j = u_j`:
///
/// ```text
/// C_l   = E_x E_j || E_i s_i (f^(l)_j w^(l+1)_{i,j} - g^(l+1)_i) ||^2
/// C_top = E_x E_j || u_j f^(L)_j - f ||^2
/// ```
///
/// Since `s_i = M^(l+1) a^(l+1)_i`, these are the per-layer variance terms
/// of the master scaled by its widths.
pub fn leading_terms(master: &MasterSurrogate, xs: &[Vec<f64>]) -> Result<LeadingTerms> {
    let net = master.network();
    let terms = approx_variance_terms(net, xs)?;
    let layers = terms
        .layers
        .iter()
        .enumerate()
        .map(|(i, v)| v * net.width(i + 1) as f64)
        .collect();
    Ok(LeadingTerms {
        layers,
        top: terms.top * net.width(net.depth()) as f64,
    })
}

/// Writes `study.csv` with columns `m,mean_l1,se_l1,mean_mse,se_mse`; absent
/// standard errors are left empty.
pub fn write_study_csv(dir: &Path, force: bool, result: &StudyResult) -> Result<()> {
    let mut out = CsvOut::create(
        &dir.join("study.csv"),
        force,
        &["m", "mean_l1", "se_l1", "mean_mse", "se_mse"],
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for w in &result.widths {
        out.row(&[
            w.m.to_string(),
            fmt_f64(w.mean_l1),
            opt(w.se_l1),
            fmt_f64(w.mean_mse),
            opt(w.se_mse),
        ])?;
    }
    out.finish()
}

/// Writes `leading_terms.csv` with columns `layer,C_value`; the top constant
/// uses the layer label `top`.
pub fn write_leading_terms_csv(dir: &Path, force: bool, terms: &LeadingTerms) -> Result<()> {
    let mut out = CsvOut::create(&dir.join("leading_terms.csv"), force, &["layer", "C_value"])?;
    for (i, c) in terms.layers.iter().enumerate() {
        out.row(&[(i + 1).to_string(), fmt_f64(*c)])?;
    }
    out.row(&["top".to_owned(), fmt_f64(terms.top)])?;
    out.finish()
}

/// JSON summary of a study run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub master_widths: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub slope: Option<f64>,
    pub slope_flag: Option<String>,
    pub leading_terms: LeadingTerms,
    pub leading_total: f64,
    /// `m * mean_mse` at the largest width.
    pub scaled_mse_at_max: f64,
    /// `scaled_mse_at_max / leading_total - 1`.
    pub relative_gap: Option<f64>,
}

impl StudySummary {
    pub fn new(
        master: &MasterSurrogate,
        cfg: &StudyConfig,
        result: &StudyResult,
        terms: LeadingTerms,
    ) -> Self {
        let leading_total = terms.total();
        let scaled = result
            .widths
            .last()
            .map(|w| w.m as f64 * w.mean_mse)
            .unwrap_or(0.0);
        let slope_flag = match result.slope {
            Some(_) => None,
            None if result.widths.len() < 2 => Some("fewer than two widths".to_owned()),
            None => Some("zero error at some width".to_owned()),
        };
        Self {
            master_widths: master.network().widths().to_vec(),
            trials: cfg.trials,
            seed: cfg.seed,
            slope: result.slope,
            slope_flag,
            leading_terms: terms,
            leading_total,
            scaled_mse_at_max: scaled,
            relative_gap: (leading_total > 0.0).then(|| scaled / leading_total - 1.0),
        }
    }

    pub fn write_json(&self, dir: &Path, force: bool) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        write_text(&dir.join("summary.json"), force, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::net::{init_network, NetworkSpec};

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![-2.0 + 4.0 * i as f64 / (n - 1) as f64, 1.0])
            .collect()
    }

    #[test]
    fn replicate_preserves_output() {
        let net = init_network(
            &NetworkSpec::new(2, vec![3, 4], 1, Activation::Tanh).with_gain(0.5),
            3,
        )
        .unwrap();
        let big = MasterSurrogate::replicate(&net, 5).unwrap();
        assert_eq!(big.network().widths(), &[15, 20]);
        for x in grid(9) {
            let a = net.predict(&x).unwrap()[0];
            let b = big.network().predict(&x).unwrap()[0];
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn width_one_master_is_reproduced_exactly() {
        let net = init_network(&NetworkSpec::new(2, vec![1, 1], 1, Activation::Tanh), 8).unwrap();
        let master = MasterSurrogate::new(net.clone());
        let sub = master.subsample(&[1, 1], 4).unwrap();
        assert!(sub
            .weights()
            .iter()
            .zip(net.weights())
            .all(|(a, b)| a.bit_eq(b)));
        let cfg = StudyConfig::new(vec![1, 2, 4], 3, 0);
        let r = variance_study(&master, &cfg, &grid(5)).unwrap();
        // Duplicated units agree with the master up to GEMM rounding.
        assert!(r
            .widths
            .iter()
            .all(|w| w.mean_mse < 1e-28 && w.mean_l1 < 1e-14));
        let lt = leading_terms(&master, &grid(5)).unwrap();
        assert!(lt.total() < 1e-28);
    }

    #[test]
    fn single_trial_has_no_standard_error() {
        let net = init_network(&NetworkSpec::new(2, vec![8], 1, Activation::Tanh), 2).unwrap();
        let master = MasterSurrogate::new(net);
        let r = consistency_study(&master, &StudyConfig::new(vec![2, 4], 1, 5), &grid(4)).unwrap();
        assert!(r
            .widths
            .iter()
            .all(|w| w.se_l1.is_none() && w.se_mse.is_none() && w.mean_l1 > 0.0));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let net = init_network(
            &NetworkSpec::new(2, vec![16, 16], 1, Activation::Tanh).with_gain(0.5),
            2,
        )
        .unwrap();
        let master = MasterSurrogate::new(net);
        let a = run_study(
            &master,
            &StudyConfig::new(vec![2, 4], 6, 1).with_threads(1),
            &grid(4),
        )
        .unwrap();
        let b = run_study(
            &master,
            &StudyConfig::new(vec![2, 4], 6, 1).with_threads(3),
            &grid(4),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn widths_must_increase() {
        let net = init_network(&NetworkSpec::new(2, vec![4], 1, Activation::Tanh), 2).unwrap();
        let master = MasterSurrogate::new(net);
        assert!(consistency_study(&master, &StudyConfig::new(vec![4, 2], 2, 0), &grid(3)).is_err());
    }
}
