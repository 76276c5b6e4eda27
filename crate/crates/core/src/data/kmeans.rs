//! Lloyd's algorithm with k-means++ seeding.

use crate::error::{Error, Result};
use crate::math::{axpy, Matrix, Rng};

#[derive(Clone, Debug)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// Sum of squared distances to the assigned centroid, after each
    /// assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    /// Index of the closest centroid.
    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    centroids
        .row_iter()
        .enumerate()
        .map(|(c, row)| (c, sq_dist(row, point)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn seed_plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    centroids.row_mut(0).copy_from_slice(points.row(rng.below(n)));
    let mut dist: Vec<f64> = points.row_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // every point coincides with a centroid already
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (d, p) in dist.iter_mut().zip(points.row_iter()) {
            *d = d.min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

/// Clusters the rows of `points`. Stops after `max_iters` rounds or when
/// no assignment changes. An emptied cluster keeps its previous centroid.
pub fn kmeans(points: &Matrix, k: usize, rng: &mut Rng, max_iters: usize) -> Result<KMeans> {
    let n = points.rows();
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "k-means needs k >= 1 and at least one point".into(),
        ));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, points: n });
    }
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut objective = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        for (a, p) in assignments.iter_mut().zip(points.row_iter()) {
            let (c, d) = nearest(&centroids, p);
            total += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        objective.push(total);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points.row_iter()) {
            axpy(1.0, p, sums.row_mut(a));
            counts[a] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        objective,
        iterations,
    })
}
