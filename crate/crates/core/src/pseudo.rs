//! Reference centroids of the known events, relative similarity
//! distributions (RSD) over them, and pseudo pairwise labels with
//! entropy-driven selection quotas.

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unit-norm centroids of the known events, rows in ascending event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMatrix<T> {
    pub rows: Array2<T>,
    pub event_ids: Vec<i64>,
}

impl<T: Scalar> ReferenceMatrix<T> {
    /// Per-label mean embedding, L2-normalised.
    pub fn compute(emb: &Array2<T>, labels: &[i64]) -> Result<Self> {
        if labels.len() != emb.nrows() {
            return Err(Error::Dimension {
                expected: emb.nrows(),
                actual: labels.len(),
                context: "labels vs embedding rows",
            });
        }
        let mut sums: BTreeMap<i64, (Array1<T>, usize)> = BTreeMap::new();
        for (row, &l) in emb.rows().into_iter().zip(labels) {
            let entry = sums
                .entry(l)
                .or_insert_with(|| (Array1::zeros(emb.ncols()), 0));
            entry.0 += &row;
            entry.1 += 1;
        }
        if sums.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "reference matrix needs at least two events, got {}",
                sums.len()
            )));
        }
        let mut rows = Array2::zeros((sums.len(), emb.ncols()));
        let mut event_ids = Vec::with_capacity(sums.len());
        for (k, (id, (sum, count))) in sums.into_iter().enumerate() {
            let mean = sum / T::of(count as f64);
            let norm = mean.dot(&mean).sqrt();
            if !(norm > T::zero()) {
                return Err(Error::InvalidInput(format!(
                    "event {id} has a zero-norm centroid"
                )));
            }
            rows.row_mut(k).assign(&(mean / norm));
            event_ids.push(id);
        }
        Ok(Self { rows, event_ids })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn cast<U: Scalar>(&self) -> ReferenceMatrix<U> {
        ReferenceMatrix {
            rows: self.rows.mapv(|v| U::of(v.as_f64())),
            event_ids: self.event_ids.clone(),
        }
    }
}

/// Probability vector over the known events and its entropy in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RsdVector<T> {
    pub p: Array1<T>,
    pub entropy_bits: T,
}

impl<T: Scalar> RsdVector<T> {
    pub fn from_probs(p: Array1<T>) -> Self {
        let entropy_bits = entropy_bits(p.view());
        Self { p, entropy_bits }
    }
}

/// Shannon entropy in bits with `0 log 0 = 0`.
pub fn entropy_bits<T: Scalar>(p: ArrayView1<T>) -> T {
    let mut h = T::zero();
    for &x in p {
        if x > T::zero() {
            h -= x * x.log2();
        }
    }
    h.max(T::zero())
}

/// `softmax(h / |h| . R^T)`.
pub fn rsd<T: Scalar>(h: ArrayView1<T>, reference: &ReferenceMatrix<T>) -> Result<RsdVector<T>> {
    rsd_with_temperature(h, reference, T::one())
}

/// RSD with the logits divided by `temperature`; `rsd` is the case `1`.
pub fn rsd_with_temperature<T: Scalar>(
    h: ArrayView1<T>,
    reference: &ReferenceMatrix<T>,
    temperature: T,
) -> Result<RsdVector<T>> {
    if h.len() != reference.rows.ncols() {
        return Err(Error::Dimension {
            expected: reference.rows.ncols(),
            actual: h.len(),
            context: "embedding vs reference width",
        });
    }
    if !(temperature > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let norm = h.dot(&h).sqrt();
    if !(norm > T::zero()) {
        return Err(Error::InvalidInput(
            "zero embedding has no direction".into(),
        ));
    }
    let logits = reference.rows.dot(&h) / (norm * temperature);
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exp = logits.mapv(|l| (l - max).exp());
    let total = exp.sum();
    Ok(RsdVector::from_probs(exp / total))
}

/// RSD vectors for every row of `emb`.
pub fn rsd_all<T: Scalar>(
    emb: &Array2<T>,
    reference: &ReferenceMatrix<T>,
    temperature: T,
) -> Result<Vec<RsdVector<T>>> {
    emb.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            rsd_with_temperature(row, reference, temperature).map_err(|e| match e {
                Error::InvalidInput(_) => Error::ZeroNorm(i),
                other => other,
            })
        })
        .collect()
}

/// Cosine similarity of two vectors; zero if either has zero norm.
pub fn cosine<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    let denom = (a.dot(&a) * b.dot(&b)).sqrt();
    if denom > T::zero() {
        a.dot(&b) / denom
    } else {
        T::zero()
    }
}

/// Cosine similarity between two RSD vectors.
pub fn consistency<T: Scalar>(a: &RsdVector<T>, b: &RsdVector<T>) -> T {
    cosine(a.p.view(), b.p.view())
}

/// 1 iff `consistency > 0.5`.
pub fn pseudo_label<T: Scalar>(consistency: T) -> u8 {
    u8::from(consistency > T::of(0.5))
}

/// Confidence in a pseudo label: `C` for positives, `1 - C` for negatives.
pub fn quality<T: Scalar>(consistency: T, label: u8) -> T {
    if label == 1 {
        consistency
    } else {
        T::one() - consistency
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoPair<T> {
    pub i: usize,
    pub j: usize,
    pub consistency: T,
    pub label: u8,
    pub quality: T,
}

impl<T: Scalar> PseudoPair<T> {
    pub fn new(i: usize, j: usize, consistency: T) -> Self {
        let label = pseudo_label(consistency);
        Self {
            i,
            j,
            consistency,
            label,
            quality: quality(consistency, label),
        }
    }
}

/// Partner quotas `(positive, negative)` per message for the high- and
/// low-entropy halves of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas {
    pub high: (usize, usize),
    pub low: (usize, usize),
}

impl Default for Quotas {
    fn default() -> Self {
        Self {
            high: (20, 20),
            low: (10, 10),
        }
    }
}

/// Marks the `floor(n / 2)` messages of largest entropy (ties broken by
/// index) as high-entropy; with odd `n` the median falls in the low half.
pub fn high_entropy_mask<T: Scalar>(rsd: &[RsdVector<T>]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..rsd.len()).collect();
    order.sort_by(|&a, &b| {
        rsd[a]
            .entropy_bits
            .partial_cmp(&rsd[b].entropy_bits)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; rsd.len()];
    for &i in &order[rsd.len() - rsd.len() / 2..] {
        mask[i] = true;
    }
    mask
}

/// Every unordered pair of the block with its pseudo label, in
/// lexicographic order.
pub fn candidate_pairs<T: Scalar>(rsd: &[RsdVector<T>]) -> Vec<PseudoPair<T>> {
    let n = rsd.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(PseudoPair::new(i, j, consistency(&rsd[i], &rsd[j])));
        }
    }
    out
}

/// Pseudo-labelled pairs for one block. Messages are visited in index
/// order; each draws up to its quota of positive and of negative partners
/// uniformly without replacement from the rest of the block. A pair drawn
/// twice (from either end) is kept once, at its first occurrence.
pub fn select_pairs<T: Scalar>(
    rsd: &[RsdVector<T>],
    quotas: Quotas,
    seed: u64,
) -> Vec<PseudoPair<T>> {
    let n = rsd.len();
    if n < 2 {
        return Vec::new();
    }
    let high = high_entropy_mask(rsd);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    let mut cons = vec![T::zero(); n];
    for i in 0..n {
        pos.clear();
        neg.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            cons[j] = consistency(&rsd[i], &rsd[j]);
            if pseudo_label(cons[j]) == 1 {
                pos.push(j);
            } else {
                neg.push(j);
            }
        }
        let (qp, qn) = if high[i] { quotas.high } else { quotas.low };
        for (candidates, quota) in [(&pos, qp), (&neg, qn)] {
            let take = quota.min(candidates.len());
            for k in index::sample(&mut rng, candidates.len(), take) {
                let j = candidates[k];
                let key = (i.min(j), i.max(j));
                if seen.insert(key) {
                    out.push(PseudoPair::new(key.0, key.1, cons[j]));
                }
            }
        }
    }
    out
}
