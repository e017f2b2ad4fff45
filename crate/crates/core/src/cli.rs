//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code: 0 on success, 1 on usage errors, 2 on
//! runtime failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::checkpoint;
use crate::data::{featurize, gen_data, linspace};
use crate::diagnostics::{
    approx_variance, default_thresholds, feature_functions, kkt_pairs, sparsity_cdf,
    write_features_csv, write_kkt_csv, write_sparsity_csv, write_variance_csv,
};
use crate::error::Error;
use crate::io::read_float_csv;
use crate::net::{init_network, Network, NetworkSpec};
use crate::regularizer::{Preset, RegularizerSpec};
use crate::repopulation::{resample, solve_weights, ProxConfig};
use crate::sampling::{
    leading_terms, variance_study, write_leading_terms_csv, write_study_csv, MasterSurrogate,
    StudyConfig, StudySummary,
};
use crate::train::{datasets, train_on, write_metrics_csv, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "nfr",
    version,
    about = "Mean-field networks with feature repopulation"
)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write samples of the synthetic target to data.csv (x,y).
    GenData(GenDataArgs),
    /// Train from a JSON config; writes metrics.csv, variance.csv, model.nfr, config.json.
    Train(TrainArgs),
    /// Solve importance weights and resample a checkpoint; writes model_repop.nfr and p_layer<l>.csv.
    Repopulate(RepopulateArgs),
    /// Write variance.csv, kkt_layer<l>.csv and sparsity_layer<l>.csv for a checkpoint.
    Diagnose(DiagnoseArgs),
    /// Subsampling study; writes study.csv, leading_terms.csv, summary.json.
    Study(StudyArgs),
    /// Write features_layer<l>.csv for a checkpoint.
    ExportFeatures(FeatureArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: f64,
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "data.csv")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Training set CSV (x,y) replacing the generated one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
}

/// Regularizer selection shared by several commands.
#[derive(Debug, Args)]
pub struct RegArgs {
    /// L12, L21 or L_half_4.
    #[arg(long, default_value = "L12")]
    pub preset: String,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
}

impl RegArgs {
    fn spec(&self, depth: usize) -> Result<RegularizerSpec, CliError> {
        let preset: Preset = self
            .preset
            .parse()
            .map_err(|e: Error| CliError::Usage(e.to_string()))?;
        Ok(RegularizerSpec::preset(preset, depth, self.lambda))
    }
}

/// Evenly spaced scalar inputs.
#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = -2.0 * std::f64::consts::PI)]
    pub lo: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 2.0 * std::f64::consts::PI)]
    pub hi: f64,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
}

impl GridArgs {
    fn inputs(&self, input_dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
        let bias = match input_dim {
            1 => false,
            2 => true,
            d => {
                return Err(CliError::Usage(format!(
                    "scalar grids need input dim 1 or 2, network has {d}"
                )))
            }
        };
        if self.points == 0 || !(self.lo < self.hi) {
            return Err(CliError::Usage("grid needs points >= 1 and lo < hi".into()));
        }
        Ok(linspace(self.lo, self.hi, self.points)
            .into_iter()
            .map(|x| featurize(x, bias))
            .collect())
    }
}

#[derive(Debug, Args)]
pub struct RepopulateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub reg: RegArgs,
    /// Prox settings as JSON, e.g. '{"max_iters": 200}'.
    #[arg(long)]
    pub prox: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub reg: RegArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// metrics.csv whose variance column becomes variance.csv; otherwise a
    /// single row for --epoch is computed from the checkpoint.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    /// Number of sparsity thresholds.
    #[arg(long, default_value_t = 101)]
    pub thresholds: usize,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Master checkpoint; a fresh random network is used when absent.
    #[arg(long)]
    pub master: Option<PathBuf>,
    /// Copy every master unit this many times.
    #[arg(long, default_value_t = 1)]
    pub replicate: usize,
    /// Depth of the random master.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Width of every layer of the random master.
    #[arg(long, default_value_t = 2048)]
    pub master_width: usize,
    /// Initialization gain of the random master.
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[command(flatten)]
    pub grid: StudyGrid,
}

#[derive(Debug, Args)]
pub struct StudyGrid {
    #[arg(long, allow_hyphen_values = true, default_value_t = -2.0 * std::f64::consts::PI)]
    pub lo: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 2.0 * std::f64::consts::PI)]
    pub hi: f64,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Hidden layer (1-based); all layers when absent.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Neurons sampled per layer (all if the layer is narrower).
    #[arg(long, default_value_t = 30)]
    pub neurons: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Threads for `study`, from `NFR_THREADS` (0 when unset or invalid).
fn env_threads() -> usize {
    std::env::var("NFR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

fn load_checkpoint(path: &Path) -> Result<Network, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "checkpoint not found: {}",
            path.display()
        )));
    }
    Ok(checkpoint::load(path)?)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out_dir.as_path();
    let force = cli.force;
    let seed = cli.seed;
    match &cli.command {
        Command::GenData(a) => {
            let data = gen_data(a.n, a.lo, a.hi, seed.unwrap_or(0))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            data.write_csv(&out.join(&a.output), force)?;
        }
        Command::Train(a) => {
            if !a.config.exists() {
                return Err(CliError::Usage(format!(
                    "config not found: {}",
                    a.config.display()
                )));
            }
            let mut cfg =
                TrainConfig::load(&a.config).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(s) = seed {
                cfg.seeds.init = s;
                cfg.seeds.data = s.wrapping_add(1);
                cfg.seeds.resample = s.wrapping_add(2);
            }
            let (mut train_set, test_set) = datasets(&cfg)?;
            if let Some(path) = &a.data {
                train_set = crate::data::Dataset::read_csv(path)?;
            }
            let verbose = a.verbose;
            let outcome = train_on(&cfg, &train_set, &test_set, |r| {
                if verbose {
                    eprintln!(
                        "epoch {:>4}  train_rmse {:.4e}  test_rmse {:.4e}  reg {:.4e}  V {:.4e}",
                        r.epoch, r.train_rmse, r.test_rmse, r.reg_value, r.variance
                    );
                }
            })?;
            crate::io::write_text(&out.join("config.json"), force, &(cfg.to_json() + "\n"))?;
            write_metrics_csv(&out.join("metrics.csv"), force, &outcome.metrics)?;
            let rows: Vec<(usize, f64)> = outcome
                .metrics
                .iter()
                .map(|m| (m.epoch, m.variance))
                .collect();
            write_variance_csv(out, force, &rows)?;
            checkpoint::save(&outcome.network, &out.join("model.nfr"), force)?;
            if let Some(epoch) = outcome.diverged_at {
                return Err(CliError::Runtime(Error::NonFinite(format!(
                    "training diverged in epoch {epoch}; model.nfr holds the last finite epoch"
                ))));
            }
        }
        Command::Repopulate(a) => {
            let net = load_checkpoint(&a.checkpoint)?;
            let spec = a.reg.spec(net.depth())?;
            let prox: ProxConfig = match &a.prox {
                Some(text) => serde_json::from_str(text)
                    .map_err(|e| CliError::Usage(format!("--prox: {e}")))?,
                None => ProxConfig::default(),
            };
            let p = solve_weights(&net, &spec, &prox)?;
            let new = resample(&net, &p, seed.unwrap_or(0))?;
            checkpoint::save(&new, &out.join("model_repop.nfr"), force)?;
            p.write_csv(out, force)?;
        }
        Command::Diagnose(a) => {
            let net = load_checkpoint(&a.checkpoint)?;
            let spec = a.reg.spec(net.depth())?;
            let rows = match &a.metrics {
                Some(path) => {
                    let (header, data) = read_float_csv(path)?;
                    let e = header.iter().position(|h| h == "epoch");
                    let v = header.iter().position(|h| h == "variance");
                    let (Some(e), Some(v)) = (e, v) else {
                        return Err(CliError::Usage(format!(
                            "{}: missing epoch/variance columns",
                            path.display()
                        )));
                    };
                    data.iter().map(|r| (r[e] as usize, r[v])).collect()
                }
                None => {
                    let xs = a.grid.inputs(net.input_dim())?;
                    vec![(a.epoch, approx_variance(&net, &xs)?)]
                }
            };
            write_variance_csv(out, force, &rows)?;
            for l in 1..=net.depth() {
                let pairs = kkt_pairs(&net, &spec, l)?;
                write_kkt_csv(out, force, &pairs, l)?;
                let w = &net.weights()[l - 1];
                let t = default_thresholds(w, a.thresholds);
                write_sparsity_csv(out, force, l, &t, &sparsity_cdf(w, &t))?;
            }
        }
        Command::Study(a) => {
            let seed = seed.unwrap_or(0);
            let base = match &a.master {
                Some(p) => load_checkpoint(p)?,
                None => {
                    let spec =
                        NetworkSpec::new(2, vec![a.master_width; a.depth], 1, Activation::Tanh)
                            .with_gain(a.gain);
                    init_network(&spec, seed).map_err(|e| CliError::Usage(e.to_string()))?
                }
            };
            let master = MasterSurrogate::replicate(&base, a.replicate)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let grid = GridArgs {
                lo: a.grid.lo,
                hi: a.grid.hi,
                points: a.grid.points,
            };
            let xs = grid.inputs(master.network().input_dim())?;
            let cfg =
                StudyConfig::new(a.widths.clone(), a.trials, seed).with_threads(env_threads());
            // One pass yields both the distance and squared-error columns.
            let variance =
                variance_study(&master, &cfg, &xs).map_err(|e| CliError::Usage(e.to_string()))?;
            let terms = leading_terms(&master, &xs)?;
            write_study_csv(out, force, &variance)?;
            write_leading_terms_csv(out, force, &terms)?;
            StudySummary::new(&master, &cfg, &variance, terms).write_json(out, force)?;
        }
        Command::ExportFeatures(a) => {
            let net = load_checkpoint(&a.checkpoint)?;
            let xs = a.grid.inputs(net.input_dim())?;
            let layers: Vec<usize> = match a.layer {
                Some(l) if l == 0 || l > net.depth() => {
                    return Err(CliError::Usage(format!(
                        "--layer {l} outside 1..={}",
                        net.depth()
                    )))
                }
                Some(l) => vec![l],
                None => (1..=net.depth()).collect(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            for l in layers {
                let m = net.width(l);
                let mut ids = sample(&mut rng, m, a.neurons.min(m)).into_vec();
                ids.sort_unstable();
                let values = feature_functions(&net, l, &xs, &ids)?;
                write_features_csv(out, force, l, &xs, &ids, &values)?;
            }
        }
    }
    Ok(())
}
