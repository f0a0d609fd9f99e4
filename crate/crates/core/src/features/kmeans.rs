//! Lloyd's algorithm with k-means++ seeding for the hand-position clusters.
//!
//! Fitting canonicalizes the row order internally (lexicographic sort), so
//! the result depends only on the multiset of points, not on how the caller
//! happened to order them.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix};
use crate::ser;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    #[serde(with = "ser::array2")]
    pub centroids: Array2<f64>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Nearest centroid under Euclidean distance; ties go to the lowest index.
    pub fn assign(&self, point: ArrayView1<f64>) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.outer_iter().enumerate() {
            let d = sq_dist(point, c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn one_hot(&self, point: ArrayView1<f64>) -> Vec<f64> {
        let mut row = vec![0.0; self.k()];
        row[self.assign(point)] = 1.0;
        row
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fits `k` clusters on the anchor points with k-means++ initialization,
/// iterating Lloyd steps to an assignment fixpoint (or 300 iterations).
/// Deterministic for a fixed seed.
pub fn fit_position_clusters(
    anchors: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<KMeansModel, FeatureError> {
    let (model, _) = lloyd_with_history(anchors, k, seed)?;
    Ok(model)
}

fn lloyd_with_history(
    anchors: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>), FeatureError> {
    if k == 0 {
        return Err(FeatureError::InvalidConfig("k must be >= 1".into()));
    }
    let n = anchors.data.nrows();
    let d = anchors.data.ncols();
    if n < k {
        return Err(FeatureError::InsufficientData(format!(
            "{n} points cannot form {k} clusters"
        )));
    }

    // Canonical order: sort rows lexicographically so the fit is a function
    // of the point multiset alone.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for j in 0..d {
            match anchors.data[[a, j]].partial_cmp(&anchors.data[[b, j]]).expect("finite") {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let points: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| anchors.data.row(i).to_vec())
        .collect();

    let distinct = {
        let mut count = 1usize;
        for w in points.windows(2) {
            if w[0] != w[1] {
                count += 1;
            }
        }
        count
    };
    if distinct < k {
        return Err(FeatureError::InsufficientData(format!(
            "only {distinct} distinct points for {k} clusters"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist_slices(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        debug_assert!(total > 0.0, "distinct >= k guarantees an uncovered point");
        let mut u = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        centroids.push(points[pick].clone());
        let latest = centroids.last().unwrap().clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist_slices(p, &latest));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = sq_dist_slices(p, centroid);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (j, v) in p.iter().enumerate() {
                sums[assignment[i]][j] += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
            // An emptied cluster keeps its previous centroid.
        }
    }

    let mut flat = Array2::zeros((k, d));
    for (c, centroid) in centroids.iter().enumerate() {
        for (j, &v) in centroid.iter().enumerate() {
            flat[[c, j]] = v;
        }
    }
    Ok((KMeansModel { centroids: flat }, history))
}

fn sq_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
