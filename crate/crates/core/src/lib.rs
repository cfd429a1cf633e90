//! Simulator for synchronous distributed SGD under Byzantine attack.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, the precision experiments run at.

pub mod aggregation;
pub mod attacks;
pub mod data;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod numstats;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use aggregation::{
    bulyan, kmeans_cluster_defense, krum, mean_aggregate, median_of, trimmed_mean, Aggregate,
    DefenseChoice, DefenseKind, KrumOutcome, TrimmedVariant,
};
pub use attacks::{
    apply_backdoor_pattern, craft_backdoor, craft_prevent_convergence, delta_loss, AttackConfig,
    AttackKind, BackdoorKind, BackdoorSpec, PatternSpec, PerturbationSign,
};
pub use data::{load_idx, split_iid, synth_blobs, DataSplit};
pub use error::{Error, ErrorCategory, Result};
pub use nn::{sgd_step, train_local, TrainingConfig};
pub use numstats::{compute_z_max, per_dimension_stats, standard_normal_cdf, AttackBudget};
pub use scalar::Scalar;
pub use sim::{
    evaluate, run_experiment, write_results, DatasetSource, ExperimentConfig, ExperimentSummary,
    RoundRecord, SynthSpec,
};

pub type ParameterVector = params::ParameterVector<f64>;
pub type WorkerUpdate = params::WorkerUpdate<f64>;
pub type DimensionStats = numstats::DimensionStats<f64>;
pub type MlpModel = nn::MlpModel<f64>;
pub type Matrix = matrix::Matrix<f64>;
pub type Dataset = data::Dataset<f64>;
pub type ExperimentOutcome = sim::ExperimentOutcome<f64>;
