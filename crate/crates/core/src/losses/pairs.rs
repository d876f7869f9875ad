use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_CAP_PER_CLASS: usize = 1000;

/// Matched positive and negative pairs: `pos[t]` is compared with `neg[t]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairBatch {
    pub pos: Vec<(usize, usize)>,
    pub neg: Vec<(usize, usize)>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// Checks the batch invariants against `labels`.
    pub fn validate(&self, labels: &[i64]) -> Result<()> {
        if self.pos.len() != self.neg.len() {
            return Err(Error::InvalidInput(format!(
                "{} positive vs {} negative pairs",
                self.pos.len(),
                self.neg.len()
            )));
        }
        let n = labels.len();
        let mut seen = HashSet::new();
        for &(i, j) in &self.pos {
            if i >= n || j >= n || labels[i] != labels[j] || i == j {
                return Err(Error::InvalidInput(format!("bad positive pair ({i}, {j})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidInput(format!(
                    "repeated positive pair ({i}, {j})"
                )));
            }
        }
        seen.clear();
        for &(i, j) in &self.neg {
            if i >= n || j >= n || labels[i] == labels[j] {
                return Err(Error::InvalidInput(format!("bad negative pair ({i}, {j})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidInput(format!(
                    "repeated negative pair ({i}, {j})"
                )));
            }
        }
        Ok(())
    }
}

fn classes(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        out.entry(l).or_default().push(i);
    }
    out
}

fn intra_pairs(members: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut all = Vec::with_capacity(members.len() * members.len().saturating_sub(1) / 2);
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            all.push((i, j));
        }
    }
    if all.len() <= cap {
        return all;
    }
    let mut picked: Vec<usize> = index::sample(rng, all.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| all[k]).collect()
}

fn inter_pairs(
    labels: &[i64],
    need: usize,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = labels.len();
    if total <= 4 * need || total <= 50_000 {
        let mut all = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] != labels[j] {
                    all.push((i, j));
                }
            }
        }
        let mut picked: Vec<usize> = index::sample(rng, all.len(), need).into_vec();
        picked.sort_unstable();
        return picked.into_iter().map(|k| all[k]).collect();
    }
    // sparse regime: rejection sampling over unordered index pairs
    let mut seen = HashSet::with_capacity(need);
    let mut out = Vec::with_capacity(need);
    while out.len() < need {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j || labels[i] == labels[j] {
            continue;
        }
        let pair = (i.min(j), i.max(j));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    out.sort_unstable();
    out
}

/// All intra-class pairs (at most `cap_per_class` per class, subsampled
/// uniformly) matched one-to-one with as many distinct inter-class pairs.
pub fn sample_pairs(labels: &[i64], seed: u64, cap_per_class: usize) -> Result<PairBatch> {
    let groups = classes(labels);
    if groups.len() < 2 {
        return Err(Error::DegenerateBatch(
            "fewer than two distinct labels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::new();
    for members in groups.values() {
        pos.extend(intra_pairs(members, cap_per_class, &mut rng));
    }
    if pos.is_empty() {
        return Err(Error::DegenerateBatch("no class has two members".into()));
    }
    let n = labels.len();
    let same: usize = groups.values().map(|m| m.len() * (m.len() - 1) / 2).sum();
    let total_inter = n * (n - 1) / 2 - same;
    if total_inter < pos.len() {
        let mut keep: Vec<usize> = index::sample(&mut rng, pos.len(), total_inter).into_vec();
        keep.sort_unstable();
        pos = keep.into_iter().map(|k| pos[k]).collect();
    }
    let mut neg = inter_pairs(labels, pos.len(), total_inter, &mut rng);
    neg.shuffle(&mut rng);
    Ok(PairBatch { pos, neg })
}

/// Anchor, positive, negative index triples: every sampled positive pair
/// gets one uniformly drawn negative for its anchor.
pub fn sample_triplets(
    labels: &[i64],
    seed: u64,
    cap_per_class: usize,
) -> Result<Vec<(usize, usize, usize)>> {
    let groups = classes(labels);
    if groups.len() < 2 {
        return Err(Error::DegenerateBatch(
            "fewer than two distinct labels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (&label, members) in &groups {
        let others: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != label).collect();
        for (a, p) in intra_pairs(members, cap_per_class, &mut rng) {
            let neg = others[rng.gen_range(0..others.len())];
            out.push((a, p, neg));
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateBatch("no class has two members".into()));
    }
    Ok(out)
}
