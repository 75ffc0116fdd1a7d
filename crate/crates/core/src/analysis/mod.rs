//! Evaluation of embeddings: accuracy prediction, transfer across spaces,
//! training traces, correlation metrics and 2-D projections.

pub mod forest;
pub mod metrics;
pub mod pca;
pub mod predictive;
pub mod stats;
pub mod trace;
pub mod transfer;

pub use forest::{forest_fit, forest_predict, ForestConfig, ForestModel};
pub use metrics::{kendall_tau_b, pearson};
pub use pca::{pca2d, Pca2d};
pub use predictive::{predictive_power, PredictiveReport};
pub use stats::{permutation_p, wilcoxon_signed_rank, Alternative};
pub use trace::{evolution_trace, mean_displacement};
pub use transfer::{transfer_all, transfer_experiment, Direction, EvalOnly, Source, TransferReport, TransferRun};
