use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, LossVariant, PipelineConfig};
use super::Block;
use crate::cluster_eval::{ami, kmeans, nmi};
use crate::encoder::{AdamState, EncoderParams, ForwardPass};
use crate::error::{Error, Result};
use crate::losses::{
    orthogonal_loss, pairwise_loss, pretrain_loss, quality_weighted_loss, sample_pairs,
    sample_triplets, triplet_loss, LossGrad, PairBatch, WeightedPair,
};
use crate::pseudo::{rsd_all, select_pairs, PseudoPair, ReferenceMatrix};

const SPLIT: u64 = 1;
const INIT: u64 = 2;
const EPOCH: u64 = 3;
const BATCH: u64 = 4;
const VALIDATE: u64 = 5;
const SELECT: u64 = 6;
const PAIRING: u64 = 7;
// shared with block evaluation so the test-split scores coincide
const TEST: u64 = 9;

/// Train / validation / test node indices of the labelled block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, config: &PipelineConfig) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[SPLIT],
        )));
        let n_train = (n as f64 * config.train_frac).round() as usize;
        let n_val = ((n as f64 * config.val_frac).round() as usize).min(n - n_train);
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Self {
            train: order,
            val,
            test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub val_nmi: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: EncoderParams<f64>,
    pub reference: ReferenceMatrix<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub split: Split,
    pub test_nmi: f64,
    pub test_ami: f64,
}

fn scatter_rows(grad: &Array2<f64>, rows: &[usize], n: usize) -> Array2<f64> {
    let mut full = Array2::zeros((n, grad.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        let mut dst = full.row_mut(i);
        dst += &grad.row(r);
    }
    full
}

/// k-means with k = number of distinct labels among `nodes`, scored by NMI
/// and AMI against those labels.
pub fn cluster_subset(
    emb: &Array2<f64>,
    nodes: &[usize],
    labels: &[i64],
    config: &PipelineConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    let truth: Vec<i64> = nodes.iter().map(|&i| labels[i]).collect();
    let k = truth.iter().collect::<BTreeSet<_>>().len();
    let sub = emb.select(Axis(0), nodes);
    let pred = kmeans(&sub, k, seed, &config.kmeans())?.labels;
    Ok((nmi(&truth, &pred)?, ami(&truth, &pred)?))
}

fn batch_loss(
    emb: &Array2<f64>,
    labels: &[i64],
    config: &PipelineConfig,
    seed: u64,
) -> Result<LossGrad<f64>> {
    match config.loss {
        LossVariant::Pairwise => {
            let pairs = sample_pairs(labels, seed, config.cap_per_class)?;
            pretrain_loss(
                &pairs,
                emb,
                labels,
                config.margin,
                config.ortho_weight,
                config.pair_mode,
            )
        }
        LossVariant::Triplet => {
            let triplets = sample_triplets(labels, seed, config.cap_per_class)?;
            let mut out = triplet_loss(&triplets, emb, config.margin)?;
            if config.ortho_weight != 0.0 {
                let ortho = orthogonal_loss(emb, labels)?;
                out.value += config.ortho_weight * ortho.value;
                out.grad.scaled_add(config.ortho_weight, &ortho.grad);
            }
            Ok(out)
        }
    }
}

/// Supervised training on the labelled block with early stopping on
/// validation NMI. Returns the best-validation parameters (the latest
/// epoch among ties) and the reference
/// matrix they induce on the whole block.
pub fn pretrain(block: &Block, config: &PipelineConfig) -> Result<PretrainOutcome> {
    let labels = block.labels().ok_or_else(|| {
        Error::InvalidInput("pre-training needs every message of block 0 labelled".into())
    })?;
    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in &labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.values().filter(|&&c| c >= 2).count() < 2 {
        return Err(Error::DegenerateBatch(
            "pre-training needs at least two events with two messages each".into(),
        ));
    }
    let graph = &block.graph;
    let n = graph.len();
    let split = Split::new(n, config);
    if split.val.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "block of {n} messages is too small to split"
        )));
    }
    let adam_config = config.adam();
    let mut params = EncoderParams::<f64>::init(
        config.encoder(graph.features.ncols()),
        derive_seed(config.seed, &[INIT]),
    );
    let mut adam = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, EncoderParams<f64>)> = None;
    let mut since_best = 0;
    for epoch in 0..config.pretrain_epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[EPOCH, epoch as u64],
        )));
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_labels: Vec<i64> = chunk.iter().map(|&i| labels[i]).collect();
            let pass = ForwardPass::run(graph, &params)?;
            let emb = pass.embeddings.select(Axis(0), chunk);
            let seed = derive_seed(config.seed, &[BATCH, epoch as u64, b as u64]);
            let loss = match batch_loss(&emb, &batch_labels, config, seed) {
                Ok(l) => l,
                Err(Error::DegenerateBatch(why)) => {
                    warn!("epoch {epoch} batch {b} skipped: {why}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let grads = pass.backward(&params, &scatter_rows(&loss.grad, chunk, n))?;
            adam.step(&mut params, &grads, &adam_config)?;
            total += loss.value;
            batches += 1;
        }
        let emb = ForwardPass::run(graph, &params)?.embeddings;
        let (val_nmi, _) = cluster_subset(
            &emb,
            &split.val,
            &labels,
            config,
            derive_seed(config.seed, &[VALIDATE]),
        )?;
        let loss = if batches > 0 {
            total / batches as f64
        } else {
            f64::NAN
        };
        debug!("pretrain epoch {epoch}: loss {loss:.4}, validation nmi {val_nmi:.4}");
        history.push(EpochRecord {
            epoch,
            loss,
            val_nmi,
        });
        // ties move the checkpoint forward but do not reset patience
        let previous = best.as_ref().map(|(score, _, _)| *score);
        if previous.map_or(true, |score| val_nmi >= score) {
            best = Some((val_nmi, epoch, params.clone()));
        }
        if previous.map_or(true, |score| val_nmi > score) {
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    let emb = ForwardPass::run(graph, &params)?.embeddings;
    let reference = ReferenceMatrix::compute(&emb, &labels)?;
    let (test_nmi, test_ami) = cluster_subset(
        &emb,
        &split.test,
        &labels,
        config,
        derive_seed(config.seed, &[TEST, 0]),
    )?;
    Ok(PretrainOutcome {
        params,
        reference,
        history,
        best_epoch,
        split,
        test_nmi,
        test_ami,
    })
}

/// One selected pseudo pair as used for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPair {
    pub id_i: String,
    pub id_j: String,
    pub consistency: f64,
    pub label: u8,
    pub quality: f64,
    /// Whether the pseudo label agrees with the ground truth, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRound {
    pub block: usize,
    pub round: usize,
    /// Matched positive/negative terms trained on; 0 when the round was
    /// skipped for lack of pairs.
    pub terms: usize,
    pub pairs: Vec<AuditPair>,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: EncoderParams<f64>,
    pub audit: Vec<AuditRound>,
}

/// Every positive matched with a negative; the shorter list is reused
/// cyclically so that no selected pair is dropped.
fn match_pairs(pairs: &[PseudoPair<f64>], rng: &mut ChaCha8Rng) -> Vec<WeightedPair<f64>> {
    let mut pos: Vec<&PseudoPair<f64>> = pairs.iter().filter(|p| p.label == 1).collect();
    let mut neg: Vec<&PseudoPair<f64>> = pairs.iter().filter(|p| p.label == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Vec::new();
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    (0..pos.len().max(neg.len()))
        .map(|t| {
            let (p, q) = (pos[t % pos.len()], neg[t % neg.len()]);
            WeightedPair {
                pos: (p.i, p.j),
                c_pos: p.consistency.clamp(0.0, 1.0),
                neg: (q.i, q.j),
                c_neg: q.consistency.clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Self-supervised adaptation to one unlabelled block: each round
/// regenerates pseudo pairs from the current embeddings against the frozen
/// reference, then trains on them.
pub fn finetune_block(
    block: &Block,
    params_in: &EncoderParams<f64>,
    reference: &ReferenceMatrix<f64>,
    config: &PipelineConfig,
) -> Result<FinetuneOutcome> {
    finetune_relabelled(block, params_in, reference, config, |_| {})
}

/// `finetune_block` with every selected pair passed through `relabel`
/// before training.
pub(crate) fn finetune_relabelled(
    block: &Block,
    params_in: &EncoderParams<f64>,
    reference: &ReferenceMatrix<f64>,
    config: &PipelineConfig,
    relabel: impl Fn(&mut PseudoPair<f64>),
) -> Result<FinetuneOutcome> {
    if block.graph.is_empty() {
        return Err(Error::InvalidInput(format!(
            "block {} is empty",
            block.index
        )));
    }
    let graph = &block.graph;
    let truth = block.labels();
    let mut params = params_in.clone();
    let mut adam = AdamState::new(&params);
    let adam_config = config.adam();
    let mut audit = Vec::new();
    let tag = block.index as u64;
    for round in 0..config.finetune_rounds {
        let emb = ForwardPass::run(graph, &params)?.embeddings;
        let rsd = rsd_all(&emb, reference, config.rsd_temperature)?;
        let mut selected = select_pairs(
            &rsd,
            config.quotas(),
            derive_seed(config.seed, &[SELECT, tag, round as u64]),
        );
        selected.iter_mut().for_each(&relabel);
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[PAIRING, tag, round as u64]));
        let terms = match_pairs(&selected, &mut rng);
        audit.push(AuditRound {
            block: block.index,
            round,
            terms: terms.len(),
            pairs: selected
                .iter()
                .map(|p| AuditPair {
                    id_i: graph.node_ids[p.i].clone(),
                    id_j: graph.node_ids[p.j].clone(),
                    consistency: p.consistency,
                    label: p.label,
                    quality: p.quality,
                    correct: truth.as_ref().map(|t| (t[p.i] == t[p.j]) == (p.label == 1)),
                })
                .collect(),
        });
        if terms.is_empty() {
            warn!(
                "block {} round {round}: no positive/negative pseudo pairs to match, skipping",
                block.index
            );
            continue;
        }
        for _ in 0..config.finetune_epochs_per_round {
            let mut order = terms.clone();
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.finetune_batch_size) {
                let pass = ForwardPass::run(graph, &params)?;
                let loss = if config.quality_weighted {
                    quality_weighted_loss(chunk, &pass.embeddings, config.margin)?
                } else {
                    let batch = PairBatch {
                        pos: chunk.iter().map(|t| t.pos).collect(),
                        neg: chunk.iter().map(|t| t.neg).collect(),
                    };
                    pairwise_loss(&batch, &pass.embeddings, config.margin)?
                };
                debug!(
                    "block {} round {round}: batch loss {:.4}",
                    block.index, loss.value
                );
                let grads = pass.backward(&params, &loss.grad)?;
                adam.step(&mut params, &grads, &adam_config)?;
            }
        }
    }
    Ok(FinetuneOutcome { params, audit })
}
