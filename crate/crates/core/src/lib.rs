//! Mean-field deep fully connected networks with `l_{a,b}` regularizers,
//! importance weighting of hidden units, discrete feature repopulation, and
//! Monte-Carlo studies of the discretization error.
//!
//! Hidden layers average over their inputs:
//!
//! ```text
//! g^(l)_j = (1/m^(l-1)) sum_k w^(l)_{j,k} f^(l-1)_k,   f^(l)_j = h(g^(l)_j),
//! f(x)    = (1/m^(L))   sum_j u_j f^(L)_j,
//! ```
//!
//! with `f^(0) = x` and no biases.
//!
//! ```
//! use nfr::{forward, init_network, Activation, NetworkSpec};
//!
//! let net = init_network(&NetworkSpec::new(2, vec![8, 4], 1, Activation::Tanh), 7).unwrap();
//! let trace = forward(&net, &[0.5, 1.0]).unwrap();
//! assert_eq!(trace.features(1).len(), 8);
//! ```

pub mod activation;
pub mod batch;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod net;
pub mod optim;
pub mod regularizer;
pub mod repopulation;
pub mod sampling;
pub mod train;

pub use activation::Activation;
pub use batch::{predict_batch, BatchWorkspace};
pub use diagnostics::{
    approx_variance, approx_variance_terms, feature_functions, kkt_pairs, pearson, sparsity_cdf,
    KktPair, VarianceTerms,
};
pub use error::{Error, Result};
pub use loss::{loss_and_grad, Loss, LossKind};
pub use matrix::Matrix;
pub use net::{
    backward, forward, init_network, sensitivities, ForwardTrace, Gradients, Network, NetworkSpec,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use regularizer::{
    layer_reg, reg_grad, top_reg, total_reg, weighted_reg, weighted_reg_grad_p, Exponents, Preset,
    RegularizerSpec,
};
pub use repopulation::{
    project_scaled_simplex, resample, solve_weights, weighted_forward, ImportanceWeights,
    ProxConfig,
};
pub use sampling::{
    consistency_study, leading_terms, variance_study, LeadingTerms, MasterSurrogate, StudyConfig,
    StudyResult,
};
pub use train::{train, MetricsRecord, TrainConfig, TrainOutcome};
