//! Open-set event detection over social message streams.
//!
//! Messages of each time block are linked into a graph by shared users,
//! hashtags and entities and embedded by a two-layer graph attention
//! encoder. The encoder is pre-trained on the labelled first block with a
//! pairwise contrastive loss plus an orthogonality constraint between
//! classes, then fine-tuned on every later, unlabelled block with pseudo
//! pairwise labels derived from similarity distributions over the known
//! events. Events are recovered by clustering the embeddings.

pub mod cluster_eval;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod losses;
pub mod pipeline;
pub mod pseudo;
pub mod scalar;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision instantiations used by the training pipeline.
pub type Params = encoder::EncoderParams<f64>;
pub type Adam = encoder::AdamState<f64>;
pub type Embeddings = ndarray::Array2<f64>;
pub type Reference = pseudo::ReferenceMatrix<f64>;
pub type Rsd = pseudo::RsdVector<f64>;

/// Single precision instantiations, for inference on memory-bound hosts.
pub type ParamsF32 = encoder::EncoderParams<f32>;
pub type ReferenceF32 = pseudo::ReferenceMatrix<f32>;
