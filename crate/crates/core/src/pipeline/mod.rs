//! Pre-training on the labelled block, per-block self-supervised
//! fine-tuning, evaluation, checkpoints and diagnostics.

mod config;
pub mod diagnostics;
mod eval;
mod stream;
mod train;

pub use config::{derive_seed, Clustering, LossVariant, PipelineConfig};
pub use eval::{cluster, evaluate_block, evaluate_embeddings, BlockReport, Scope};
pub use stream::{
    checkpoint_path, run_stream, write_atomic, Block, PipelineCheckpoint, PreparedStream,
    StreamOutcome, PIPELINE_CHECKPOINT_VERSION,
};
pub use train::{
    cluster_subset, finetune_block, pretrain, AuditPair, AuditRound, EpochRecord, FinetuneOutcome,
    PretrainOutcome, Split,
};
