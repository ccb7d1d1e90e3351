//! Deep metric learning for task-specific sentence embeddings.
//!
//! The crate trains a small sentence encoder (token embeddings, masked mean
//! pooling, linear projection, L2 normalization) with pair-based losses over
//! in-batch cosine similarities: a contrastive baseline, a soft-margin triplet
//! baseline with hard mining, and a multi-similarity loss whose locality
//! weights are recomputed at every step together with an informative-pair
//! filter. Evaluation covers threshold-search pair classification, triplet
//! accuracy, Hit@n retrieval, the inter/intra cluster ratio, and a 2-D PCA
//! projection for plotting.
//!
//! Module map:
//!
//! - [`data`] — tokenization, vocabulary, dataset loading, POI-to-sentence
//!   pipeline with Morton geocoding.
//! - [`encoder`] — trainable encoder parameters and analytic forward/backward.
//! - [`similarity`] — cosine similarity matrix and positive/negative masks.
//! - [`losses`] — the three pair losses with exact `dL/dS` and pair-weight
//!   extraction.
//! - [`mining`] — informative-pair filtering, hard mining, PK batch sampling.
//! - [`trainer`] — optimization loop, optimizers, checkpoints.
//! - [`eval`] — the evaluation protocols.

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod mining;
pub mod similarity;
pub mod trainer;

pub use error::{Error, Result};
