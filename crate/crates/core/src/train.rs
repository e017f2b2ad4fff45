//! Minibatch training on the synthetic task with optional feature
//! repopulation events.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::batch::{predict_batch, BatchWorkspace};
use crate::data::{gen_data, input_dim, linspace, Dataset};
use crate::diagnostics::approx_variance;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvOut};
use crate::loss::LossKind;
use crate::matrix::Matrix;
use crate::net::{init_network, Network, NetworkSpec};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::regularizer::{
    layer_reg_grad_into, top_reg_grad_into, total_reg, Exponents, Preset, RegularizerSpec,
};
use crate::repopulation::{resample, solve_weights, ProxConfig};

/// Regularizer section of the config: a preset or explicit exponents, plus
/// penalties. `lambdas` and `lambda_u` default to `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub preset: Option<Preset>,
    pub exponents: Option<Exponents>,
    pub lambda: f64,
    pub lambdas: Option<Vec<f64>>,
    pub lambda_u: Option<f64>,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            preset: Some(Preset::L12),
            exponents: None,
            lambda: 3e-5,
            lambdas: None,
            lambda_u: None,
        }
    }
}

impl RegularizerConfig {
    pub fn to_spec(&self, depth: usize) -> Result<RegularizerSpec> {
        let exponents = match (self.preset, self.exponents) {
            (_, Some(e)) => e,
            (Some(p), None) => p.exponents(),
            (None, None) => {
                return Err(Error::Config(
                    "regularizer needs `preset` or `exponents`".into(),
                ))
            }
        };
        let spec = RegularizerSpec::new(
            exponents,
            self.lambdas
                .clone()
                .unwrap_or_else(|| vec![self.lambda; depth]),
            self.lambda_u.unwrap_or(self.lambda),
        );
        spec.validate(depth)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// When to run repopulation. Events happen after the listed (1-based) epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DfrSchedule {
    /// After every `every`-th epoch up to and including epoch `until`.
    Every {
        every: usize,
        until: usize,
    },
    Epochs {
        epochs: Vec<usize>,
    },
}

impl DfrSchedule {
    pub fn fires_after(&self, epoch: usize) -> bool {
        match self {
            DfrSchedule::Every { every, until } => {
                *every > 0 && epoch.is_multiple_of(*every) && epoch <= *until
            }
            DfrSchedule::Epochs { epochs } => epochs.contains(&epoch),
        }
    }
}

/// How the nominal learning rate maps onto each weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScaling {
    /// Same rate for every matrix.
    None,
    /// Rate times the matrix's fan-in `m^(l-1)` (and `m^(L)` for `U`). An
    /// Adam step of `lr * m` on a mean-field weight equals a step of `lr` on
    /// the standard-parameterized weight `w / m`, so `lr` keeps its usual
    /// meaning.
    FanIn,
}

/// Per-epoch multiplier on the configured learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from 1 in the first epoch down to `final_fraction` in the last.
    Cosine {
        final_fraction: f64,
    },
}

impl LrSchedule {
    /// Multiplier for 1-based `epoch` out of `epochs`.
    pub fn factor(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { final_fraction } => {
                if epochs <= 1 {
                    return 1.0;
                }
                let t = (epoch - 1) as f64 / (epochs - 1) as f64;
                final_fraction
                    + (1.0 - final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
    pub resample: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            init: 0,
            data: 1,
            resample: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub lo: f64,
    pub hi: f64,
    /// Append a constant 1 to every input.
    pub bias_input: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_test: 2_000,
            lo: -2.0 * std::f64::consts::PI,
            hi: 2.0 * std::f64::consts::PI,
            bias_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of hidden layers `L`.
    pub depth: usize,
    /// Hidden widths are `base_width * 2^(L - l)` unless `widths` is given.
    pub base_width: usize,
    pub widths: Option<Vec<usize>>,
    pub activation: Activation,
    pub init_gain: f64,
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    pub lr_scaling: LrScaling,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub regularizer: RegularizerConfig,
    pub dfr: Option<DfrSchedule>,
    pub prox: ProxConfig,
    pub seeds: Seeds,
    pub data: DataConfig,
    /// Size of the fixed evenly spaced batch used for the variance column.
    pub variance_points: usize,
    /// Record elapsed seconds; when off the column is 0 so reruns are
    /// byte-identical.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_width: 128,
            widths: None,
            activation: Activation::Tanh,
            init_gain: 1.0,
            loss: LossKind::Squared,
            optimizer: OptimizerConfig::default(),
            lr_scaling: LrScaling::FanIn,
            lr_schedule: LrSchedule::Cosine {
                final_fraction: 0.01,
            },
            batch_size: 16,
            epochs: 200,
            regularizer: RegularizerConfig::default(),
            dfr: None,
            prox: ProxConfig::default(),
            seeds: Seeds::default(),
            data: DataConfig::default(),
            variance_points: 512,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        match &self.widths {
            Some(w) => w.clone(),
            None => (1..=self.depth)
                .map(|l| self.base_width << (self.depth - l))
                .collect(),
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec::new(
            input_dim(self.data.bias_input),
            self.hidden_widths(),
            1,
            self.activation,
        )
        .with_gain(self.init_gain)
    }

    pub fn regularizer_spec(&self) -> Result<RegularizerSpec> {
        self.regularizer.to_spec(self.depth)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if let Some(w) = &self.widths {
            if w.len() != self.depth || w.contains(&0) {
                return bad(format!(
                    "widths {w:?} must list {} positive entries",
                    self.depth
                ));
            }
        } else if self.base_width == 0 {
            return bad("base_width must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.loss != LossKind::Squared {
            return bad("the regression task supports only the squared loss".into());
        }
        if self.data.n_train == 0 || self.variance_points == 0 {
            return bad("n_train and variance_points must be >= 1".into());
        }
        if !(self.data.lo < self.data.hi) {
            return bad(format!(
                "data range [{}, {}] is empty",
                self.data.lo, self.data.hi
            ));
        }
        if let Some(DfrSchedule::Epochs { epochs }) = &self.dfr {
            if let Some(e) = epochs.iter().find(|&&e| e == 0 || e > self.epochs) {
                return bad(format!(
                    "repopulation epoch {e} outside 1..={}",
                    self.epochs
                ));
            }
        }
        if let LrSchedule::Cosine { final_fraction } = self.lr_schedule {
            if !(0.0..=1.0).contains(&final_fraction) {
                return bad(format!("final_fraction {final_fraction} outside [0, 1]"));
            }
        }
        self.optimizer.validate()?;
        self.prox
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.network_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.regularizer_spec()?;
        Ok(())
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based epoch.
    pub epoch: usize,
    /// Root of the mean squared error accumulated over the epoch's minibatches.
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Weighted regularizer `R(w, u)` at the end of the epoch.
    pub reg_value: f64,
    /// Approximation variance at the end of the epoch.
    pub variance: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "train_rmse",
    "test_rmse",
    "reg_value",
    "variance",
    "seconds",
];

pub fn write_metrics_csv(path: &Path, force: bool, metrics: &[MetricsRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, force, &METRICS_HEADER)?;
    for r in metrics {
        out.row(&[
            r.epoch.to_string(),
            fmt_f64(r.train_rmse),
            fmt_f64(r.test_rmse),
            fmt_f64(r.reg_value),
            fmt_f64(r.variance),
            fmt_f64(r.seconds),
        ])?;
    }
    out.finish()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final network, or the last finite one when training diverged.
    pub network: Network,
    pub metrics: Vec<MetricsRecord>,
    /// Epoch in which a non-finite loss or gradient appeared.
    pub diverged_at: Option<usize>,
    /// Epochs after which repopulation ran.
    pub dfr_epochs: Vec<usize>,
}

/// Train and test sets drawn from the config's data section.
pub fn datasets(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    let train = gen_data(d.n_train, d.lo, d.hi, cfg.seeds.data)?;
    let test = gen_data(d.n_test, d.lo, d.hi, cfg.seeds.data ^ 0x7E57_7E57_7E57_7E57)?;
    Ok((train, test))
}

/// Fixed evenly spaced inputs for the variance column.
pub fn variance_batch(cfg: &TrainConfig) -> Vec<Vec<f64>> {
    linspace(cfg.data.lo, cfg.data.hi, cfg.variance_points)
        .into_iter()
        .map(|x| crate::data::featurize(x, cfg.data.bias_input))
        .collect()
}

/// Trains with the generated datasets.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (tr, te) = datasets(cfg)?;
    train_on(cfg, &tr, &te, |_| {})
}

/// Trains on the given data, calling `on_epoch` after each metrics record.
///
/// Each epoch visits the training set in a fresh permutation drawn from the
/// data seed, in minibatches of `batch_size` (the last may be short), taking
/// one optimizer step on `mean squared error + R(w, u)` per batch. After a
/// scheduled epoch the importance weights are solved, every hidden layer is
/// resampled, and the optimizer state is reset. The learning rate follows
/// `lr_schedule` epoch by epoch. Metrics are evaluated on the network as it
/// stands at the end of the epoch, after any repopulation.
pub fn train_on(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let spec = cfg.regularizer_spec()?;
    let Exponents { o1, o2, o3 } = spec.exponents;
    let mut net = init_network(&cfg.network_spec(), cfg.seeds.init)?;
    let d = net.input_dim();
    let bias = cfg.data.bias_input;
    let x_train = train_set.inputs(bias);
    let x_test = test_set.inputs(bias);
    let var_batch = variance_batch(cfg);

    let scales: Vec<f64> = match cfg.lr_scaling {
        LrScaling::None => Vec::new(),
        LrScaling::FanIn => (0..=net.depth()).map(|l| net.width(l) as f64).collect(),
    };
    let mut opt = Optimizer::new(cfg.optimizer.clone()).with_slot_scales(scales);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.data.wrapping_add(0x5_4FF1E));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut ws = BatchWorkspace::new();
    let mut d_w: Vec<Matrix> = net
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut d_u = Matrix::zeros(net.top().rows(), 1);
    let mut xb = Vec::with_capacity(cfg.batch_size * d);
    let mut d_out = Vec::with_capacity(cfg.batch_size);
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut dfr_epochs = Vec::new();

    for epoch in 1..=cfg.epochs {
        let last_good = net.clone();
        opt.set_lr(cfg.optimizer.lr * cfg.lr_schedule.factor(epoch, cfg.epochs));
        order.shuffle(&mut shuffle_rng);
        let mut sq_sum = 0.0;
        let mut diverged = false;
        for idx in order.chunks(cfg.batch_size) {
            xb.clear();
            for &i in idx {
                xb.extend_from_slice(&x_train[i * d..(i + 1) * d]);
            }
            ws.forward(&net, &xb);
            let scale = 2.0 / idx.len() as f64;
            d_out.clear();
            for (&f, &i) in ws.output().iter().zip(idx) {
                let r = f - train_set.y[i];
                sq_sum += r * r;
                d_out.push(scale * r);
            }
            if !sq_sum.is_finite() {
                diverged = true;
                break;
            }
            ws.backward(&net, &xb, &d_out, &mut d_w, &mut d_u, 0.0);
            for ((w, g), &lambda) in net.weights().iter().zip(d_w.iter_mut()).zip(&spec.lambdas) {
                if lambda != 0.0 {
                    layer_reg_grad_into(w, o1, o2, lambda, g);
                }
            }
            if spec.lambda_u != 0.0 {
                top_reg_grad_into(net.top(), o3, spec.lambda_u, &mut d_u);
            }
            let (weights, top) = net.params_mut();
            let mut params: Vec<&mut [f64]> =
                weights.iter_mut().map(Matrix::as_mut_slice).collect();
            params.push(top.as_mut_slice());
            let mut grads: Vec<&[f64]> = d_w.iter().map(Matrix::as_slice).collect();
            grads.push(d_u.as_slice());
            match opt.step(&mut params, &grads) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged || !net.is_finite() {
            return Ok(TrainOutcome {
                network: last_good,
                metrics,
                diverged_at: Some(epoch),
                dfr_epochs,
            });
        }

        if cfg.dfr.as_ref().is_some_and(|s| s.fires_after(epoch)) {
            let p = solve_weights(&net, &spec, &cfg.prox)?;
            net = resample(&net, &p, cfg.seeds.resample.wrapping_add(epoch as u64))?;
            opt.reset();
            dfr_epochs.push(epoch);
        }

        let record = MetricsRecord {
            epoch,
            train_rmse: rmse(&net, &x_train, &train_set.y),
            test_rmse: rmse(&net, &x_test, &test_set.y),
            reg_value: total_reg(&net, &spec),
            variance: approx_variance(&net, &var_batch)?,
            seconds: if cfg.wall_clock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&record);
        metrics.push(record);
    }
    Ok(TrainOutcome {
        network: net,
        metrics,
        diverged_at: None,
        dfr_epochs,
    })
}

/// Value and gradient of the training objective on one batch:
/// `(1/B) sum_b (f(x_b) - y_b)^2 + R(w, u)`.
pub fn objective_and_grad(
    net: &Network,
    spec: &RegularizerSpec,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, Vec<Matrix>, Matrix)> {
    let d = net.input_dim();
    if net.output_dim() != 1 || x.len() != y.len() * d || y.is_empty() {
        return Err(Error::dim("objective batch", y.len() * d, x.len()));
    }
    spec.validate(net.depth())?;
    let Exponents { o1, o2, o3 } = spec.exponents;
    let mut ws = BatchWorkspace::new();
    ws.forward(net, x);
    let scale = 2.0 / y.len() as f64;
    let mut sq = 0.0;
    let d_out: Vec<f64> = ws
        .output()
        .iter()
        .zip(y)
        .map(|(f, t)| {
            sq += (f - t) * (f - t);
            scale * (f - t)
        })
        .collect();
    let mut d_w: Vec<Matrix> = net
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut d_u = Matrix::zeros(net.top().rows(), 1);
    ws.backward(net, x, &d_out, &mut d_w, &mut d_u, 0.0);
    for ((w, g), &lambda) in net.weights().iter().zip(d_w.iter_mut()).zip(&spec.lambdas) {
        layer_reg_grad_into(w, o1, o2, lambda, g);
    }
    top_reg_grad_into(net.top(), o3, spec.lambda_u, &mut d_u);
    Ok((sq / y.len() as f64 + total_reg(net, spec), d_w, d_u))
}

/// Root mean squared error of a scalar-output network over row-major inputs.
pub fn rmse(net: &Network, x: &[f64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let out = predict_batch(net, x);
    let sq: f64 = out.iter().zip(y).map(|(f, t)| (f - t) * (f - t)).sum();
    (sq / y.len() as f64).sqrt()
}
