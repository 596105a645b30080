//! One-dimensional k-means (Lloyd's algorithm with random restarts).

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::Rng;

const MAX_LLOYD_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<f64>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

impl KMeans {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (v - c) * (v - c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn lloyd(x: &[f64], mut centers: Vec<f64>) -> KMeans {
    let k = centers.len();
    let mut labels = vec![usize::MAX; x.len()];
    for _ in 0..MAX_LLOYD_ITER {
        let mut changed = false;
        for (i, &v) in x.iter().enumerate() {
            let l = nearest(&centers, v);
            if l != labels[i] {
                labels[i] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (i, &v) in x.iter().enumerate() {
            sum[labels[i]] += v;
            cnt[labels[i]] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centers[j] = sum[j] / cnt[j] as f64;
            } else {
                // reseed an empty cluster at the worst-fitted point
                let far = (0..x.len())
                    .max_by(|&a, &b| {
                        let da = (x[a] - centers[labels[a]]).powi(2);
                        let db = (x[b] - centers[labels[b]]).powi(2);
                        da.total_cmp(&db)
                    })
                    .expect("non-empty data");
                centers[j] = x[far];
                labels[far] = j;
            }
        }
    }
    let wcss = x.iter().zip(&labels).map(|(v, &l)| (v - centers[l]).powi(2)).sum();
    KMeans { centers, labels, wcss }
}

/// Best of `restarts` Lloyd runs, each started from k distinct data points.
/// Ties keep the earliest restart.
pub fn kmeans_1d(x: &[f64], k: usize, restarts: usize, rng: &mut Rng) -> Result<KMeans> {
    if k == 0 || x.len() < k {
        return Err(Error::InvalidParameter(format!("k-means needs at least k = {k} >= 1 points")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("k-means input must be finite".into()));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = sample(rng, x.len(), k).into_iter().map(|i| x[i]).collect();
        let fit = lloyd(x, init);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
