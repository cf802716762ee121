//! Lloyd's K-means over raw (lat, lon) degree coordinates with k-means++ seeding.
//!
//! Distances are Euclidean in degree space, the same space the Gaussian
//! components live in.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<GeoPoint>,
    pub assignments: Vec<usize>,
    /// Sum of squared Euclidean distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each centroid update.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: GeoPoint, b: GeoPoint) -> f64 {
    let (d1, d2) = (a.lat - b.lat, a.lon - b.lon);
    d1 * d1 + d2 * d2
}

pub fn count_distinct(points: &[GeoPoint]) -> usize {
    points.iter().map(|p| (p.lat.to_bits(), p.lon.to_bits())).collect::<HashSet<_>>().len()
}

fn nearest(p: GeoPoint, centroids: &[GeoPoint]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, *c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn inertia(points: &[GeoPoint], centroids: &[GeoPoint], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| sq_dist(*p, centroids[a])).sum()
}

fn seed_plus_plus(points: &[GeoPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(*p, centroids[0])).collect();
    while centroids.len() < k {
        // At least one point is distinct from every chosen centroid, so the total weight is positive.
        let dist = WeightedIndex::new(&d2).expect("positive D^2 weight while fewer than k distinct centroids");
        let c = points[dist.sample(rng)];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(*p, c));
        }
    }
    centroids
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[GeoPoint], centroids: &mut [GeoPoint], assignments: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, (p, &a)) in points.iter().zip(assignments.iter()).enumerate() {
            if sizes[a] > 1 {
                let d = sq_dist(*p, centroids[a]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("n >= k guarantees a donor cluster");
        assignments[i] = empty;
        centroids[empty] = points[i];
    }
}

fn update(points: &[GeoPoint], k: usize, assignments: &[usize]) -> Vec<GeoPoint> {
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a].0 += p.lat;
        sums[a].1 += p.lon;
        sums[a].2 += 1;
    }
    sums.into_iter()
        .map(|(lat, lon, n)| GeoPoint { lat: lat / n as f64, lon: lon / n as f64 })
        .collect()
}

pub fn kmeans(points: &[GeoPoint], k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Init("k-means needs k >= 1".into()));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::Init(format!("k-means needs at least {k} distinct points, got {distinct}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(*p, &centroids)).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        repair_empty(points, &mut centroids, &mut assignments);
        centroids = update(points, k, &assignments);
        iterations += 1;
        let current = inertia(points, &centroids, &assignments);
        history.push(current);
        if iterations >= max_iters.max(1) {
            break;
        }
        if history.len() >= 2 && history[history.len() - 2] - current < tol {
            break;
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(*p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(KMeansResult {
        inertia: *history.last().expect("at least one iteration"),
        centroids,
        assignments,
        iterations,
        inertia_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    /// Global optimum by enumerating every assignment with non-empty clusters.
    fn exhaustive(points: &[GeoPoint], k: usize) -> (f64, Vec<GeoPoint>) {
        let n = points.len();
        let total = k.pow(n as u32);
        let mut best = (f64::INFINITY, vec![]);
        for code in 0..total {
            let mut c = code;
            let assign: Vec<usize> = (0..n)
                .map(|_| {
                    let a = c % k;
                    c /= k;
                    a
                })
                .collect();
            if (0..k).any(|j| !assign.contains(&j)) {
                continue;
            }
            let cents = update(points, k, &assign);
            let val = inertia(points, &cents, &assign);
            if val < best.0 {
                best = (val, cents);
            }
        }
        best
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![p(1.0, 2.0), p(3.0, 6.0), p(-1.0, 1.0)];
        let r = kmeans(&pts, 1, 3, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.centroids[0].lat - 1.0).abs() < 1e-12);
        assert!((r.centroids[0].lon - 3.0).abs() < 1e-12);
    }

    #[test]
    fn four_point_example_matches_exhaustive_oracle() {
        let pts = vec![p(0.0, 0.0), p(0.0, 0.1), p(10.0, 10.0), p(10.0, 10.1)];
        let (best, cents) = exhaustive(&pts, 2);
        for seed in 0..5 {
            let r = kmeans(&pts, 2, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
            assert!((r.inertia - best).abs() < 1e-9);
            let mut got = r.centroids.clone();
            got.sort_by(|a, b| a.lat.total_cmp(&b.lat));
            let mut want = cents.clone();
            want.sort_by(|a, b| a.lat.total_cmp(&b.lat));
            for (g, w) in got.iter().zip(&want) {
                assert!((g.lat - w.lat).abs() < 1e-9 && (g.lon - w.lon).abs() < 1e-9);
            }
            assert!((got[0].lon - 0.05).abs() < 1e-9 && (got[1].lon - 10.05).abs() < 1e-9);
        }
    }

    #[test]
    fn k_equal_to_distinct_points_has_zero_inertia() {
        let pts = vec![p(0.0, 0.0), p(1.0, 1.0), p(1.0, 1.0), p(5.0, -2.0)];
        let r = kmeans(&pts, 3, 9, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![p(0.0, 0.0), p(0.0, 0.0), p(1.0, 1.0)];
        assert!(matches!(kmeans(&pts, 3, 0, 10, 1e-6), Err(Error::Init(_))));
    }

    #[test]
    fn well_separated_small_sets_hit_global_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        for trial in 0..10 {
            let k = 2 + trial % 2;
            let centers: Vec<_> = (0..k).map(|j| p(10.0 * j as f64, -5.0 * j as f64)).collect();
            let pts: Vec<_> = (0..10)
                .map(|i| {
                    let c = centers[i % k];
                    p(c.lat + noise.sample(&mut rng), c.lon + noise.sample(&mut rng))
                })
                .collect();
            let (best, _) = exhaustive(&pts, k);
            let r = kmeans(&pts, k, trial as u64, DEFAULT_MAX_ITERS, 0.0).unwrap();
            assert!((r.inertia - best).abs() < 1e-9, "trial {trial}: {} vs {best}", r.inertia);
        }
    }

    #[test]
    fn inertia_never_increases_and_clusters_are_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let pts: Vec<_> = (0..200).map(|_| p(rng.gen_range(-40.0..40.0), rng.gen_range(-90.0..90.0))).collect();
            let r = kmeans(&pts, 8, seed, DEFAULT_MAX_ITERS, 0.0).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.inertia_history);
            }
            for j in 0..8 {
                assert!(r.assignments.contains(&j));
            }
            assert!(r.inertia >= 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..100).map(|_| p(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let a = kmeans(&pts, 5, 42, 100, 1e-6).unwrap();
        let b = kmeans(&pts, 5, 42, 100, 1e-6).unwrap();
        assert_eq!(a, b);
    }
}
