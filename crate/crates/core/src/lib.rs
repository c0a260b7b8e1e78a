//! Linguistic similarity analysis of language models from minimal-pair
//! activation differences.
//!
//! The pipeline runs dataset ingestion ([`model`]), int8 storage of
//! activation differences ([`tensorstore`]), pairwise cosine similarity
//! ([`simkernel`]), cross-model alignment ([`alignment`]), class statistics
//! ([`analysis`]) and a planar embedding of models ([`embed`]).

pub mod alignment;
pub mod analysis;
pub mod digest;
pub mod embed;
pub mod model;
pub mod rng;
pub mod simkernel;
pub mod tensorstore;

pub use digest::Digest;
pub use model::{Dataset, Level, MinimalPair, TaxonEntry, Taxonomy};
pub use tensorstore::{Aggregation, SimMatrix, VectorSet};
