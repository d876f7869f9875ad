use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, Clustering, PipelineConfig};
use super::Block;
use crate::cluster_eval::{ami, dbscan, kmeans, nmi, noise_to_singletons, NOISE};
use crate::encoder::{EncoderParams, ForwardPass};
use crate::error::{Error, Result};

const CLUSTER: u64 = 9;

/// Which messages of a block a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Block,
    /// The held-out test share of the labelled block.
    TestSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: usize,
    pub scope: Scope,
    pub n_messages: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_known: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_novel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_true: Option<usize>,
    pub k_pred: usize,
    pub noise_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ami: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Clusters the rows of `emb`; k-means needs the true class count.
pub fn cluster(
    emb: &Array2<f64>,
    k_true: Option<usize>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<i64>> {
    match config.clustering {
        Clustering::Kmeans => {
            let k = k_true.ok_or_else(|| {
                Error::Config(
                    "k-means needs the ground-truth class count; use clustering = \"dbscan\" on unlabelled data"
                        .into(),
                )
            })?;
            Ok(kmeans(emb, k, seed, &config.kmeans())?.labels)
        }
        Clustering::Dbscan => dbscan(emb, config.dbscan_eps, config.dbscan_min_pts),
    }
}

/// Report for the test-split rows `nodes`, or for the whole block when `None`.
pub fn evaluate_embeddings(
    block: &Block,
    emb: &Array2<f64>,
    nodes: Option<&[usize]>,
    known: &BTreeSet<i64>,
    config: &PipelineConfig,
) -> Result<BlockReport> {
    let scope = if nodes.is_some() {
        Scope::TestSplit
    } else {
        Scope::Block
    };
    let all: Vec<usize>;
    let nodes = match nodes {
        Some(n) => n,
        None => {
            all = (0..emb.nrows()).collect();
            &all
        }
    };
    let truth: Option<Vec<i64>> = block
        .labels()
        .map(|l| nodes.iter().map(|&i| l[i]).collect());
    let k_true = truth
        .as_ref()
        .map(|t| t.iter().collect::<BTreeSet<_>>().len());
    let sub = emb.select(Axis(0), nodes);
    let pred = cluster(
        &sub,
        k_true,
        config,
        derive_seed(config.seed, &[CLUSTER, block.index as u64]),
    )?;
    let noise_count = pred.iter().filter(|&&l| l == NOISE).count();
    let k_pred = pred
        .iter()
        .filter(|&&l| l != NOISE)
        .collect::<BTreeSet<_>>()
        .len();
    let scored = noise_to_singletons(&pred);
    let (nmi, ami) = match &truth {
        Some(t) => (Some(nmi(t, &scored)?), Some(ami(t, &scored)?)),
        None => (None, None),
    };
    let n_known = truth
        .as_ref()
        .map(|t| t.iter().filter(|l| known.contains(l)).count());
    Ok(BlockReport {
        block: block.index,
        scope,
        n_messages: nodes.len(),
        n_known,
        n_novel: n_known.map(|k| nodes.len() - k),
        k_true,
        k_pred,
        noise_count,
        nmi,
        ami,
        wall_time_ms: None,
    })
}

/// Embeds the block with `params` and scores the clustering against the
/// ground truth when every message is labelled.
pub fn evaluate_block(
    block: &Block,
    params: &EncoderParams<f64>,
    known: &BTreeSet<i64>,
    config: &PipelineConfig,
) -> Result<BlockReport> {
    let emb = ForwardPass::run(&block.graph, params)?.embeddings;
    evaluate_embeddings(block, &emb, None, known, config)
}
