//! Training objectives over embedding rows, each returning the loss value
//! together with its exact gradient with respect to the embeddings.
//!
//! Distances are Euclidean. Hinge terms contribute zero gradient at the kink
//! and the distance gradient between coincident points is taken to be zero.

mod pairs;

pub use pairs::{sample_pairs, sample_triplets, PairBatch, DEFAULT_CAP_PER_CLASS};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Loss value and gradient with respect to the embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: T,
    pub grad: Array2<T>,
}

impl<T: Scalar> LossGrad<T> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            value: T::zero(),
            grad: Array2::zeros((rows, cols)),
        }
    }

    fn add_scaled(&mut self, other: &LossGrad<T>, scale: T) {
        self.value += scale * other.value;
        self.grad.scaled_add(scale, &other.grad);
    }
}

/// How positive and negative pairs are combined in the pairwise loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// `pos[t]` against `neg[t]`: linear in the number of pairs.
    #[default]
    Matched,
    /// Every positive pair against every negative pair.
    Cartesian,
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidInput(format!(
            "row index {i} out of range for {n} rows"
        )));
    }
    Ok(())
}

/// Distance between two rows and the unit direction from `j` to `i`
/// (zero when the rows coincide).
fn distance<T: Scalar>(emb: &Array2<T>, i: usize, j: usize) -> (T, Array1<T>) {
    let diff = &emb.row(i) - &emb.row(j);
    let d = diff.dot(&diff).sqrt();
    if d > T::zero() {
        (d, diff / d)
    } else {
        (T::zero(), Array1::zeros(emb.ncols()))
    }
}

fn push_distance_grad<T: Scalar>(
    grad: &mut Array2<T>,
    (i, j): (usize, usize),
    dir: ArrayView1<T>,
    coeff: T,
) {
    grad.row_mut(i).scaled_add(coeff, &dir);
    grad.row_mut(j).scaled_add(-coeff, &dir);
}

/// `sum_t max(D(pos_t) - D(neg_t) + margin, 0)` over matched pairs.
pub fn pairwise_loss<T: Scalar>(
    pairs: &PairBatch,
    emb: &Array2<T>,
    margin: T,
) -> Result<LossGrad<T>> {
    let weighted: Vec<_> = pairs
        .pos
        .iter()
        .zip(&pairs.neg)
        .map(|(&p, &q)| (p, q, T::one()))
        .collect();
    if pairs.pos.len() != pairs.neg.len() {
        return Err(Error::InvalidInput("unmatched pair batch".into()));
    }
    weighted_hinge(&weighted, emb, margin)
}

/// Every positive pair compared against every negative pair.
pub fn pairwise_loss_cartesian<T: Scalar>(
    pairs: &PairBatch,
    emb: &Array2<T>,
    margin: T,
) -> Result<LossGrad<T>> {
    let n = emb.nrows();
    for &(i, j) in pairs.pos.iter().chain(&pairs.neg) {
        check_index(i, n)?;
        check_index(j, n)?;
    }
    let pos: Vec<_> = pairs
        .pos
        .iter()
        .map(|&(i, j)| distance(emb, i, j))
        .collect();
    let neg: Vec<_> = pairs
        .neg
        .iter()
        .map(|&(i, j)| distance(emb, i, j))
        .collect();
    let mut out = LossGrad::zero(n, emb.ncols());
    let mut pos_active = vec![0usize; pos.len()];
    let mut neg_active = vec![0usize; neg.len()];
    for (a, (dp, _)) in pos.iter().enumerate() {
        for (b, (dn, _)) in neg.iter().enumerate() {
            let h = *dp - *dn + margin;
            if h > T::zero() {
                out.value += h;
                pos_active[a] += 1;
                neg_active[b] += 1;
            }
        }
    }
    for (a, (_, dir)) in pos.iter().enumerate() {
        if pos_active[a] > 0 {
            push_distance_grad(
                &mut out.grad,
                pairs.pos[a],
                dir.view(),
                T::of(pos_active[a] as f64),
            );
        }
    }
    for (b, (_, dir)) in neg.iter().enumerate() {
        if neg_active[b] > 0 {
            push_distance_grad(
                &mut out.grad,
                pairs.neg[b],
                dir.view(),
                -T::of(neg_active[b] as f64),
            );
        }
    }
    Ok(out)
}

/// Shared kernel: `sum_t w_t * max(D(p_t) - D(q_t) + margin, 0)` with
/// constant weights.
fn weighted_hinge<T: Scalar>(
    terms: &[((usize, usize), (usize, usize), T)],
    emb: &Array2<T>,
    margin: T,
) -> Result<LossGrad<T>> {
    let n = emb.nrows();
    let mut out = LossGrad::zero(n, emb.ncols());
    for &(p, q, w) in terms {
        for i in [p.0, p.1, q.0, q.1] {
            check_index(i, n)?;
        }
        let (dp, dir_p) = distance(emb, p.0, p.1);
        let (dq, dir_q) = distance(emb, q.0, q.1);
        let h = dp - dq + margin;
        if h > T::zero() {
            out.value += w * h;
            push_distance_grad(&mut out.grad, p, dir_p.view(), w);
            push_distance_grad(&mut out.grad, q, dir_q.view(), -w);
        }
    }
    Ok(out)
}

/// Anchor-based triplet hinge `sum max(D(a, p) - D(a, n) + margin, 0)`.
pub fn triplet_loss<T: Scalar>(
    triplets: &[(usize, usize, usize)],
    emb: &Array2<T>,
    margin: T,
) -> Result<LossGrad<T>> {
    let terms: Vec<_> = triplets
        .iter()
        .map(|&(a, p, n)| ((a, p), (a, n), T::one()))
        .collect();
    weighted_hinge(&terms, emb, margin)
}

/// A matched pair of pseudo-labelled pairs with their consistency values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair<T> {
    pub pos: (usize, usize),
    pub c_pos: T,
    pub neg: (usize, usize),
    pub c_neg: T,
}

impl<T: Scalar> WeightedPair<T> {
    pub fn weight(&self) -> T {
        self.c_pos + T::one() - self.c_neg
    }
}

/// Pairwise hinge with each term weighted by `C_pos + 1 - C_neg`. The
/// weights are constants: no gradient flows through the consistencies.
pub fn quality_weighted_loss<T: Scalar>(
    pairs: &[WeightedPair<T>],
    emb: &Array2<T>,
    margin: T,
) -> Result<LossGrad<T>> {
    for p in pairs {
        for c in [p.c_pos, p.c_neg] {
            if !(c >= T::zero() && c <= T::one()) {
                return Err(Error::InvalidInput(format!(
                    "consistency {c} outside [0, 1]"
                )));
            }
        }
    }
    let terms: Vec<_> = pairs.iter().map(|p| (p.pos, p.neg, p.weight())).collect();
    weighted_hinge(&terms, emb, margin)
}

/// Rows scaled to unit length; errors on the first zero row.
pub fn normalize_rows<T: Scalar>(emb: &Array2<T>) -> Result<(Array2<T>, Vec<T>)> {
    let mut out = emb.clone();
    let mut norms = Vec::with_capacity(emb.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > T::zero()) {
            return Err(Error::ZeroNorm(i));
        }
        row /= norm;
        norms.push(norm);
    }
    Ok((out, norms))
}

/// `sum_ij (P_ij - cos(h_i, h_j))^2` with `P_ij = 1` iff rows `i` and `j`
/// share a label (diagonal included).
pub fn orthogonal_loss<T: Scalar>(emb: &Array2<T>, labels: &[i64]) -> Result<LossGrad<T>> {
    if labels.len() != emb.nrows() {
        return Err(Error::Dimension {
            expected: emb.nrows(),
            actual: labels.len(),
            context: "labels vs embedding rows",
        });
    }
    let (unit, norms) = normalize_rows(emb)?;
    let cos = unit.dot(&unit.t());
    let n = emb.nrows();
    let mut residual = Array2::<T>::zeros((n, n));
    let mut value = T::zero();
    for i in 0..n {
        for j in 0..n {
            let target = if labels[i] == labels[j] {
                T::one()
            } else {
                T::zero()
            };
            let r = target - cos[[i, j]];
            residual[[i, j]] = r;
            value += r * r;
        }
    }
    // d/d unit = -4 R unit (R symmetric), then project through normalisation
    let d_unit = residual.dot(&unit) * T::of(-4.0);
    let mut grad = Array2::zeros(emb.raw_dim());
    for i in 0..n {
        let g = d_unit.row(i);
        let u = unit.row(i);
        let radial = g.dot(&u);
        let mut row = grad.row_mut(i);
        row.assign(&(&g - &(&u * radial)));
        row /= norms[i];
    }
    Ok(LossGrad { value, grad })
}

/// Pre-training objective: pairwise hinge plus `ortho_weight` times the
/// orthogonality term. With a zero weight the orthogonality term is not
/// evaluated.
pub fn pretrain_loss<T: Scalar>(
    pairs: &PairBatch,
    emb: &Array2<T>,
    labels: &[i64],
    margin: T,
    ortho_weight: T,
    mode: PairMode,
) -> Result<LossGrad<T>> {
    let mut out = match mode {
        PairMode::Matched => pairwise_loss(pairs, emb, margin)?,
        PairMode::Cartesian => pairwise_loss_cartesian(pairs, emb, margin)?,
    };
    if ortho_weight != T::zero() {
        out.add_scaled(&orthogonal_loss(emb, labels)?, ortho_weight);
    }
    Ok(out)
}
