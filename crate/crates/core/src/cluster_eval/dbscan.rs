use std::collections::VecDeque;

use ndarray::Array2;

use super::NOISE;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn region<T: Scalar>(x: &Array2<T>, i: usize, eps2: f64) -> Vec<usize> {
    (0..x.nrows())
        .filter(|&j| {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum();
            d <= eps2
        })
        .collect()
}

/// Density clustering: points with at least `min_pts` neighbours within
/// `eps` (themselves included) are core points; clusters are the
/// eps-connected components of core points plus the border points they
/// reach. Unreached points are labelled [`NOISE`]. Clusters are numbered
/// in order of discovery while scanning points by index.
pub fn dbscan<T: Scalar>(emb: &Array2<T>, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::InvalidInput(format!(
            "dbscan needs eps > 0 and min_pts >= 1, got {eps} and {min_pts}"
        )));
    }
    let n = emb.nrows();
    let eps2 = eps * eps;
    let mut labels = vec![None::<i64>; n];
    let mut next = 0i64;
    for start in 0..n {
        if labels[start].is_some() {
            continue;
        }
        let seeds = region(emb, start, eps2);
        if seeds.len() < min_pts {
            labels[start] = Some(NOISE);
            continue;
        }
        let cluster = next;
        next += 1;
        labels[start] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != start).collect();
        while let Some(p) = queue.pop_front() {
            match labels[p] {
                Some(NOISE) => labels[p] = Some(cluster),
                Some(_) => continue,
                None => {
                    labels[p] = Some(cluster);
                    let hood = region(emb, p, eps2);
                    if hood.len() >= min_pts {
                        queue.extend(hood);
                    }
                }
            }
        }
    }
    Ok(labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect())
}
