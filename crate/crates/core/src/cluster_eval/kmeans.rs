use ndarray::{Array2, ArrayView1};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest inertia wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<i64>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    centers.row_mut(0).assign(&x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point coincides with a chosen center
            Err(_) => rng.gen_range(0..n),
        };
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), centers.row(c)));
        }
    }
    centers
}

fn assign(x: &Array2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for i in 0..x.nrows() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..centers.nrows() {
            let d = sq_dist(x.row(i), centers.row(c));
            if d < best.0 {
                best = (d, c);
            }
        }
        labels[i] = best.1;
        inertia += best.0;
    }
    inertia
}

fn lloyd(x: &Array2<f64>, mut centers: Array2<f64>, config: &KMeansConfig) -> KMeansResult {
    let (n, d) = x.dim();
    let k = centers.nrows();
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..config.max_iter {
        history.push(assign(x, &centers, &mut labels));
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &x.row(i);
            counts[labels[i]] += 1;
        }
        let mut reseeded = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = sums.row_mut(c);
                row /= counts[c] as f64;
                continue;
            }
            // empty cluster: move to the point farthest from its own center
            let far = (0..n)
                .filter(|i| !reseeded.contains(i))
                .max_by(|&a, &b| {
                    let da = sq_dist(x.row(a), centers.row(labels[a]));
                    let db = sq_dist(x.row(b), centers.row(labels[b]));
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .unwrap_or(0);
            reseeded.push(far);
            sums.row_mut(c).assign(&x.row(far));
        }
        let shift = (0..k)
            .map(|c| sq_dist(sums.row(c), centers.row(c)).sqrt())
            .fold(0.0, f64::max);
        centers = sums;
        if shift < config.tol && reseeded.is_empty() {
            break;
        }
    }
    let inertia = assign(x, &centers, &mut labels);
    history.push(inertia);
    KMeansResult {
        labels: labels.into_iter().map(|l| l as i64).collect(),
        centers,
        inertia,
        history,
    }
}

/// k-means++ seeded Lloyd iterations, best of `config.n_init` restarts.
pub fn kmeans<T: Scalar>(
    emb: &Array2<T>,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<KMeansResult> {
    let n = emb.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} must lie in 1..={n}")));
    }
    if config.n_init == 0 || config.max_iter == 0 {
        return Err(Error::Config(
            "kmeans n_init and max_iter must be at least 1".into(),
        ));
    }
    let x = emb.mapv(|v| v.as_f64());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.n_init {
        let run = lloyd(&x, plus_plus(&x, k, &mut rng), config);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}
