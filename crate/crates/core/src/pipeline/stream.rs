use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::eval::{evaluate_block, evaluate_embeddings, BlockReport};
use super::train::{finetune_block, pretrain, AuditRound, PretrainOutcome};
use crate::encoder::{EncoderCheckpoint, EncoderParams, ForwardPass};
use crate::error::{Error, Result};
use crate::graph::{LinkPolicy, MessageGraph};
use crate::ingest::{split_blocks, EmbeddingTable, Featurizer, MessageRecord};
use crate::pseudo::ReferenceMatrix;

/// One time block with its message graph.
#[derive(Debug, Clone)]
pub struct Block {
    pub index: usize,
    pub records: Vec<MessageRecord>,
    pub graph: MessageGraph,
}

impl Block {
    pub fn new(
        index: usize,
        records: Vec<MessageRecord>,
        featurizer: &Featurizer,
        table: &EmbeddingTable,
        policy: LinkPolicy,
    ) -> Result<Self> {
        let features = featurizer.features(&records, table)?;
        let graph = MessageGraph::build_with(&records, features, policy)?;
        Ok(Self {
            index,
            records,
            graph,
        })
    }

    /// Event ids of every message, or `None` if any message is unlabelled.
    pub fn labels(&self) -> Option<Vec<i64>> {
        self.records.iter().map(|r| r.event_id).collect()
    }

    pub fn event_ids(&self) -> BTreeSet<i64> {
        self.records.iter().filter_map(|r| r.event_id).collect()
    }
}

/// A corpus cut into blocks, featurised with corpus-wide temporal scaling.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub featurizer: Featurizer,
    pub blocks: Vec<Block>,
}

impl PreparedStream {
    pub fn new(
        records: &[MessageRecord],
        table: &EmbeddingTable,
        config: &PipelineConfig,
    ) -> Result<Self> {
        let featurizer = Featurizer::fit(records, table.dim(), config.seed)?;
        Self::with_featurizer(records, table, config, featurizer)
    }

    /// Uses a previously fitted featurizer, e.g. one restored from a
    /// checkpoint.
    pub fn with_featurizer(
        records: &[MessageRecord],
        table: &EmbeddingTable,
        config: &PipelineConfig,
        featurizer: Featurizer,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("corpus is empty".into()));
        }
        let stream = split_blocks(records, config.initial_days, config.block_days)?;
        let policy = LinkPolicy {
            mentions: config.link_mentions,
        };
        let blocks = stream
            .blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| Block::new(i, b, &featurizer, table, policy).map_err(|e| e.in_block(i)))
            .collect::<Result<_>>()?;
        Ok(Self { featurizer, blocks })
    }

    /// Event ids labelled in block 0.
    pub fn known_events(&self) -> BTreeSet<i64> {
        self.blocks[0].event_ids()
    }
}

pub const PIPELINE_CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to embed and pseudo-label later blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCheckpoint {
    pub format_version: u32,
    /// Block whose processing produced these parameters.
    pub block: usize,
    pub config_hash: String,
    pub encoder: EncoderCheckpoint,
    pub reference: ReferenceMatrix<f64>,
    pub featurizer: Featurizer,
}

impl PipelineCheckpoint {
    pub fn new(
        block: usize,
        params: &EncoderParams<f64>,
        reference: &ReferenceMatrix<f64>,
        featurizer: &Featurizer,
        config: &PipelineConfig,
    ) -> Self {
        Self {
            format_version: PIPELINE_CHECKPOINT_VERSION,
            block,
            config_hash: config.hash(),
            encoder: EncoderCheckpoint::from_params(params, featurizer.d_sem, config.seed),
            reference: reference.clone(),
            featurizer: featurizer.clone(),
        }
    }

    pub fn params(&self) -> Result<EncoderParams<f64>> {
        self.encoder.to_params()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_slice(&bytes)?;
        if ckpt.format_version != PIPELINE_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported pipeline checkpoint version {}",
                ckpt.format_version
            )));
        }
        if ckpt.reference.rows.ncols() != ckpt.encoder.config.d_hidden {
            return Err(Error::Checkpoint(
                "reference width does not match the encoder output".into(),
            ));
        }
        Ok(ckpt)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_path(dir: &Path, block: usize) -> PathBuf {
    dir.join(format!("checkpoint_block{block}.json"))
}

#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub pretrain: PretrainOutcome,
    pub reports: Vec<BlockReport>,
    pub audit: Vec<AuditRound>,
    /// Parameters after the last block.
    pub final_params: EncoderParams<f64>,
}

/// Pre-trains on block 0, then fine-tunes on and evaluates every later
/// block. Each report is passed to `on_report` as soon as it exists; with
/// `out_dir` set, reports are appended to `reports.jsonl` and a checkpoint
/// is written per block.
pub fn run_stream(
    stream: &PreparedStream,
    config: &PipelineConfig,
    out_dir: Option<&Path>,
    mut on_report: impl FnMut(&BlockReport),
) -> Result<StreamOutcome> {
    config.validate()?;
    let mut report_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("reports.jsonl");
            Some((
                fs::File::create(&path).map_err(|e| Error::io(&path, e))?,
                path,
            ))
        }
        None => None,
    };
    let mut emit = |report: &BlockReport| -> Result<()> {
        if let Some((file, path)) = report_file.as_mut() {
            let mut line = serde_json::to_vec(report)?;
            line.push(b'\n');
            file.write_all(&line)
                .map_err(|e| Error::io(path.as_path(), e))?;
            file.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        on_report(report);
        Ok(())
    };
    let known = stream.known_events();
    let m0 = &stream.blocks[0];

    let started = Instant::now();
    let pre = pretrain(m0, config).map_err(|e| e.in_block(0))?;
    let emb0 = ForwardPass::run(&m0.graph, &pre.params)?.embeddings;
    let mut report = evaluate_embeddings(m0, &emb0, Some(&pre.split.test), &known, config)?;
    if config.record_wall_time {
        report.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    info!("pre-training stopped with best epoch {}", pre.best_epoch);
    emit(&report)?;
    if let Some(dir) = out_dir {
        PipelineCheckpoint::new(0, &pre.params, &pre.reference, &stream.featurizer, config)
            .save(&checkpoint_path(dir, 0))?;
    }

    let mut reports = vec![report];
    let mut audit = Vec::new();
    let mut previous = pre.params.clone();
    for block in &stream.blocks[1..] {
        let started = Instant::now();
        let params_in = if config.chain_params {
            &previous
        } else {
            &pre.params
        };
        let reference = if config.recompute_reference {
            let emb = ForwardPass::run(&m0.graph, params_in)?.embeddings;
            let labels = m0.labels().expect("block 0 is labelled");
            ReferenceMatrix::compute(&emb, &labels)?
        } else {
            pre.reference.clone()
        };
        let tuned = finetune_block(block, params_in, &reference, config)
            .map_err(|e| e.in_block(block.index))?;
        let eval_params = if config.evaluate_after_finetune {
            &tuned.params
        } else {
            params_in
        };
        let mut report = evaluate_block(block, eval_params, &known, config)
            .map_err(|e| e.in_block(block.index))?;
        if config.record_wall_time {
            report.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        emit(&report)?;
        if let Some(dir) = out_dir {
            PipelineCheckpoint::new(
                block.index,
                &tuned.params,
                &reference,
                &stream.featurizer,
                config,
            )
            .save(&checkpoint_path(dir, block.index))?;
        }
        reports.push(report);
        audit.extend(tuned.audit);
        previous = tuned.params;
    }
    Ok(StreamOutcome {
        pretrain: pre,
        reports,
        audit,
        final_params: previous,
    })
}
