use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Contingency table between two labelings.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub n: usize,
    /// Row sums (classes of `u`).
    pub a: Vec<usize>,
    /// Column sums (classes of `v`).
    pub b: Vec<usize>,
    /// Nonzero cells `(row, col, count)`.
    pub cells: Vec<(usize, usize, usize)>,
}

impl Contingency {
    pub fn new(u: &[i64], v: &[i64]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Dimension {
                expected: u.len(),
                actual: v.len(),
                context: "labelings to compare",
            });
        }
        if u.is_empty() {
            return Err(Error::InvalidInput("cannot compare empty labelings".into()));
        }
        let index = |labels: &[i64]| {
            let mut ids = BTreeMap::new();
            for &l in labels {
                let next = ids.len();
                ids.entry(l).or_insert(next);
            }
            ids
        };
        let (ui, vi) = (index(u), index(v));
        let mut a = vec![0; ui.len()];
        let mut b = vec![0; vi.len()];
        let mut cells = BTreeMap::new();
        for (x, y) in u.iter().zip(v) {
            let (r, c) = (ui[x], vi[y]);
            a[r] += 1;
            b[c] += 1;
            *cells.entry((r, c)).or_insert(0) += 1;
        }
        Ok(Self {
            n: u.len(),
            a,
            b,
            cells: cells.into_iter().map(|((r, c), k)| (r, c, k)).collect(),
        })
    }
}

/// Shannon entropy (nats) of a partition given its class sizes.
pub fn entropy(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn mutual_info(t: &Contingency) -> f64 {
    let n = t.n as f64;
    let mi: f64 = t
        .cells
        .iter()
        .map(|&(r, c, k)| {
            let k = k as f64;
            k / n * (n * k / (t.a[r] as f64 * t.b[c] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// `ln(0!) ..= ln(n!)` by running sums.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Expected mutual information (nats) of two random labelings with the
/// given marginals under the hypergeometric permutation model.
pub fn expected_mutual_info(a: &[usize], b: &[usize], n: usize) -> f64 {
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n];
            for nij in lo..=hi {
                let term = nij as f64 / nf * (nf * nij as f64 / (ai as f64 * bj as f64)).ln();
                let log_p = fixed - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Normalised mutual information with arithmetic-mean normalisation.
/// Two constant labelings score 1; exactly one constant labeling scores 0.
pub fn nmi(u: &[i64], v: &[i64]) -> Result<f64> {
    let t = Contingency::new(u, v)?;
    let (hu, hv) = (entropy(&t.a, t.n), entropy(&t.b, t.n));
    if t.a.len() == 1 && t.b.len() == 1 {
        return Ok(1.0);
    }
    if t.a.len() == 1 || t.b.len() == 1 {
        return Ok(0.0);
    }
    Ok((mutual_info(&t) / ((hu + hv) / 2.0)).clamp(0.0, 1.0))
}

/// Mutual information adjusted for chance, arithmetic-mean normalised.
/// Labelings that induce the same partition score 1; otherwise a vanishing
/// denominator scores 0.
pub fn ami(u: &[i64], v: &[i64]) -> Result<f64> {
    let t = Contingency::new(u, v)?;
    if t.cells.len() == t.a.len() && t.cells.len() == t.b.len() {
        return Ok(1.0);
    }
    let mi = mutual_info(&t);
    let emi = expected_mutual_info(&t.a, &t.b, t.n);
    let mean = (entropy(&t.a, t.n) + entropy(&t.b, t.n)) / 2.0;
    let denom = mean - emi;
    if denom.abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// Gives every noise label (`-1`) its own fresh cluster id.
pub fn noise_to_singletons(labels: &[i64]) -> Vec<i64> {
    let mut next = labels.iter().copied().max().unwrap_or(0).max(0) + 1;
    labels
        .iter()
        .map(|&l| {
            if l == super::NOISE {
                next += 1;
                next - 1
            } else {
                l
            }
        })
        .collect()
}
