//! Contrastive architecture embeddings for neural architecture search.
//!
//! Bias-free ReLU networks are locally linear, so their data Jacobians are
//! exact and cheap. Stacking Jacobians over a probe set and projecting onto
//! the top principal directions yields a per-initialization matrix that a
//! permutation-invariant encoder maps to an embedding. The encoder is trained
//! contrastively: two initializations of one architecture are a positive pair.
//! The embeddings then feed GP-based search, accuracy prediction, and
//! transfer between search spaces.
//!
//! Module map:
//!
//! - [`space`]: search-space families, genotypes, sampling and mutation
//! - [`net`]: network instantiation, training, and data Jacobians
//! - [`jacobian`]: extended Jacobian matrices, projection and normalization
//! - [`encoder`]: DeepSets encoder and NT-Xent training
//! - [`surrogate`]: GP regression, Expected Improvement, search loops
//! - [`analysis`]: forests, correlations, transfer, traces, PCA
//! - [`benchmark`] and [`store`]: persisted tabular benchmarks and matrices

pub mod analysis;
pub mod benchmark;
pub mod encoder;
mod error;
pub mod jacobian;
pub mod net;
pub mod rng;
pub mod space;
pub mod store;
pub mod surrogate;
mod sum;

pub use error::{Error, Result};

pub use benchmark::{BenchRecord, TabularBenchmark};
pub use encoder::{ContrastiveConfig, Embedding, EncoderParams, ViewStore};
pub use jacobian::{Edjm, Epdjm, ProbeSet, SvdFactors};
pub use net::{AccuracyCurve, Dataset, NetworkParams, OutputReduce, TrainConfig};
pub use space::{Family, Genotype, SearchSpaceSpec};
pub use surrogate::{AccuracyTable, GpState, SearchLog};
