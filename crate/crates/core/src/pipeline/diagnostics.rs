//! Offline audits of the pseudo-labelling signal on labelled blocks.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::train::{finetune_relabelled, FinetuneOutcome};
use super::Block;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::losses::normalize_rows;
use crate::pseudo::{consistency, PseudoPair, ReferenceMatrix, RsdVector};

/// Mean consistency of same-event and different-event pairs, measured on
/// RSD vectors and on the normalised embeddings themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyGap {
    pub rsd_pos: f64,
    pub rsd_neg: f64,
    pub rsd_gap: f64,
    pub raw_pos: f64,
    pub raw_neg: f64,
    pub raw_gap: f64,
    pub n_pos_pairs: usize,
    pub n_neg_pairs: usize,
}

/// Over all unordered pairs of the block.
pub fn consistency_gap(
    emb: &Array2<f64>,
    rsd: &[RsdVector<f64>],
    labels: &[i64],
) -> Result<ConsistencyGap> {
    let n = emb.nrows();
    if rsd.len() != n || labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: rsd.len().min(labels.len()),
            context: "rsd vectors and labels vs embedding rows",
        });
    }
    let (unit, _) = normalize_rows(emb)?;
    let cos = unit.dot(&unit.t());
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [0usize; 2];
    for i in 0..n {
        for j in i + 1..n {
            let same = usize::from(labels[i] == labels[j]);
            sums[same][0] += consistency(&rsd[i], &rsd[j]);
            sums[same][1] += cos[[i, j]];
            counts[same] += 1;
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::InvalidInput(
            "need both same-event and cross-event pairs".into(),
        ));
    }
    let mean = |same: usize, which: usize| sums[same][which] / counts[same] as f64;
    Ok(ConsistencyGap {
        rsd_pos: mean(1, 0),
        rsd_neg: mean(0, 0),
        rsd_gap: mean(1, 0) - mean(0, 0),
        raw_pos: mean(1, 1),
        raw_neg: mean(0, 1),
        raw_gap: mean(1, 1) - mean(0, 1),
        n_pos_pairs: counts[1],
        n_neg_pairs: counts[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyGroups {
    pub known_mean: f64,
    pub novel_mean: f64,
    pub n_known: usize,
    pub n_novel: usize,
}

/// Mean RSD entropy (bits) of messages from known and from novel events.
pub fn entropy_groups(
    rsd: &[RsdVector<f64>],
    labels: &[i64],
    known: &BTreeSet<i64>,
) -> EntropyGroups {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (r, l) in rsd.iter().zip(labels) {
        let g = usize::from(!known.contains(l));
        sums[g] += r.entropy_bits;
        counts[g] += 1;
    }
    let mean = |g: usize| {
        if counts[g] > 0 {
            sums[g] / counts[g] as f64
        } else {
            f64::NAN
        }
    };
    EntropyGroups {
        known_mean: mean(0),
        novel_mean: mean(1),
        n_known: counts[0],
        n_novel: counts[1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub correct: usize,
    pub incorrect: usize,
}

/// How pseudo-label correctness relates to the distance of the
/// consistency from the 0.5 threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAudit {
    /// Mean `|C - 0.5|` of correctly labelled pairs.
    pub correct_margin: f64,
    pub incorrect_margin: f64,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub histogram: Vec<HistogramBin>,
}

pub fn pseudo_label_quality(
    pairs: &[PseudoPair<f64>],
    labels: &[i64],
    bins: usize,
) -> QualityAudit {
    let bins = bins.max(1);
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            correct: 0,
            incorrect: 0,
        })
        .collect();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for p in pairs {
        let correct = (labels[p.i] == labels[p.j]) == (p.label == 1);
        let g = usize::from(correct);
        sums[g] += (p.consistency - 0.5).abs();
        counts[g] += 1;
        let b = ((p.consistency.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        if correct {
            histogram[b].correct += 1;
        } else {
            histogram[b].incorrect += 1;
        }
    }
    let mean = |g: usize| {
        if counts[g] > 0 {
            sums[g] / counts[g] as f64
        } else {
            f64::NAN
        }
    };
    QualityAudit {
        correct_margin: mean(1),
        incorrect_margin: mean(0),
        n_correct: counts[1],
        n_incorrect: counts[0],
        histogram,
    }
}

/// Fine-tunes exactly like `finetune_block` but replaces every selected
/// pseudo label by the ground truth (consistency 1 for same-event pairs, 0
/// otherwise). Bounds what better pseudo labels could achieve.
pub fn oracle_finetune(
    block: &Block,
    params_in: &EncoderParams<f64>,
    reference: &ReferenceMatrix<f64>,
    config: &PipelineConfig,
) -> Result<FinetuneOutcome> {
    let truth = block.labels().ok_or_else(|| {
        Error::InvalidInput(format!("block {} is not fully labelled", block.index))
    })?;
    finetune_relabelled(block, params_in, reference, config, |p| {
        let same = if truth[p.i] == truth[p.j] { 1.0 } else { 0.0 };
        *p = PseudoPair::new(p.i, p.j, same);
    })
}

/// Reference matrix diagnostics: mean absolute cosine between distinct
/// rows.
pub fn mean_abs_offdiag_cosine(reference: &ReferenceMatrix<f64>) -> f64 {
    let g = reference.rows.dot(&reference.rows.t());
    let k = g.nrows();
    if k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                total += g[[i, j]].abs();
            }
        }
    }
    total / (k * (k - 1)) as f64
}
