use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// One label in `0..k` per input point.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Squared-Euclidean distortion of the final assignment.
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each point to its cluster mean.
pub fn distortion(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let centroids = means(points, labels, k);
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Seeded farthest-point initialisation: a seed-chosen first centre, then
/// repeatedly the point farthest from all chosen centres (lowest index on ties).
fn farthest_point_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            if d > best_d {
                best = Some(i);
                best_d = d;
            }
        }
        let next = best.expect("n >= k leaves an unchosen point");
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen
}

/// Moves points into empty clusters until every cluster has a member. The
/// donor is the point farthest from its centroid among clusters that can
/// spare one.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut donor = None;
        let mut donor_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > donor_d {
                donor = Some(i);
                donor_d = d;
            }
        }
        let i = donor.expect("n >= k guarantees a cluster with two members");
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

/// Lloyd's k-means with deterministic seeding.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_traced(points, k, seed).map(|(a, _)| a)
}

/// Like [`kmeans`] but also returns the distortion after every centroid update.
pub fn kmeans_traced(points: &[Vec<f64>], k: usize, seed: u64) -> Result<(ClusterAssignment, Vec<f64>)> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    let d = points[0].len();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                context: "kmeans",
                expected: d,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kmeans points"));
        }
    }

    let mut centroids: Vec<Vec<f64>> = farthest_point_seeds(points, k, seed)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITERS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &mut centroids);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        centroids = means(points, &labels, k);
        trace.push(
            points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| sq_dist(p, &centroids[l]))
                .sum(),
        );
        iterations += 1;
    }

    let distortion = *trace.last().unwrap_or(&0.0);
    Ok((
        ClusterAssignment {
            labels,
            k,
            distortion,
            iterations,
            converged,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[[f64; 2]]) -> Vec<Vec<f64>> {
        raw.iter().map(|p| p.to_vec()).collect()
    }

    /// Exhaustive minimum distortion over all label vectors with exactly two
    /// non-empty clusters.
    fn brute_force_two(points: &[Vec<f64>]) -> (f64, Vec<usize>) {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let d = distortion(points, &labels, 2);
            if d < best.0 {
                best = (d, labels);
            }
        }
        best
    }

    #[test]
    fn n_equals_k_each_point_alone() {
        let p = pts(&[[0.0, 0.0], [1.0, 5.0], [-2.0, 3.0], [4.0, 4.0]]);
        let a = kmeans(&p, 4, 9).unwrap();
        let mut sorted = a.labels.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert_eq!(a.distortion, 0.0);
    }

    #[test]
    fn single_cluster() {
        let p = pts(&[[0.0, 0.0], [1.0, 5.0], [-2.0, 3.0]]);
        let a = kmeans(&p, 1, 0).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0]);
    }

    #[test]
    fn two_blobs_match_brute_force() {
        let p = pts(&[[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]]);
        let (best_d, best_labels) = brute_force_two(&p);
        for seed in 0..8 {
            let a = kmeans(&p, 2, seed).unwrap();
            assert!((a.distortion - best_d).abs() < 1e-12);
            assert_eq!(a.labels[0], a.labels[1]);
            assert_eq!(a.labels[2], a.labels[3]);
            assert_ne!(a.labels[0], a.labels[2]);
            assert!(best_labels[0] == best_labels[1]);
        }
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans(&pts(&[[0.0, 0.0]]), 2, 0),
            Err(Error::TooFewPoints { n: 1, k: 2 })
        ));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let p = pts(&[[1.0, 1.0]; 5]);
        let a = kmeans(&p, 3, 4).unwrap();
        for c in 0..3 {
            assert!(a.labels.contains(&c));
        }
    }

    #[test]
    fn distortion_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let p: Vec<Vec<f64>> = (0..40)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            let (_, trace) = kmeans_traced(&p, 5, trial).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{trace:?}");
        }
    }
}
