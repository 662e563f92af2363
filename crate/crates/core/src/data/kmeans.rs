//! Lloyd's algorithm with farthest-first seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// `J = sum_i ||x_i - c_{a(i)}||^2` at the returned state.
    pub objective: f64,
    /// `J` after every assignment step, first entry included.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sq_dist(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn objective(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Farthest-first: a seeded random first centre, then repeatedly the point
/// farthest from its nearest chosen centre (lowest index on ties).
fn seed_centroids(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let far = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, nearest(p, &centroids).1))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        centroids.push(points[far.0].clone());
    }
    centroids
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(CoreError::Argument("k-means needs at least one point".into()));
    }
    if k == 0 || k > points.len() {
        return Err(CoreError::Argument(format!("k = {k} must lie in 1..={}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(CoreError::Argument("points must be finite and share one dimension".into()));
    }

    let mut centroids = seed_centroids(points, k, seed);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = vec![objective(points, &centroids, &assignments)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed to the point worst served by its centre
                let far = points
                    .iter()
                    .zip(&assignments)
                    .enumerate()
                    .map(|(i, (p, &a))| (i, sq_dist(p, &centroids[a])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                centroids[j] = points[far.0].clone();
                assignments[far.0] = j;
            }
        }
        // assignment step
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignments;
        assignments = next;
        history.push(objective(points, &centroids, &assignments));
        if !changed {
            break;
        }
    }
    // centroids consistent with the final assignment
    for (j, c) in centroids.iter_mut().enumerate() {
        let members: Vec<&Vec<f64>> = points.iter().zip(&assignments).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
        if !members.is_empty() {
            *c = (0..dim)
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
    let objective = objective(points, &centroids, &assignments);
    Ok(KMeansResult {
        assignments,
        centroids,
        objective,
        history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    /// Minimum J over every split of 1-D points into two non-empty groups.
    fn brute_force_two(points: &[f64]) -> f64 {
        let n = points.len();
        let sse = |g: &[f64]| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        (1..(1u32 << n) - 1)
            .map(|mask| {
                let (a, b): (Vec<f64>, Vec<f64>) = {
                    let mut a = vec![];
                    let mut b = vec![];
                    for (i, &p) in points.iter().enumerate() {
                        if mask >> i & 1 == 1 { a.push(p) } else { b.push(p) }
                    }
                    (a, b)
                };
                sse(&a) + sse(&b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn separates_two_blobs() {
        let r = kmeans(&pts(&[&[0.0, 0.0], &[0.1, 0.0], &[10.0, 10.0], &[10.1, 10.0]]), 2, 1, 50).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let p = pts(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 9.0]]);
        let r = kmeans(&p, 1, 0, 10).unwrap();
        assert_eq!(r.centroids[0], vec![3.0, 5.0]);
        let total: f64 = p.iter().map(|q| (q[0] - 3.0).powi(2) + (q[1] - 5.0).powi(2)).sum();
        assert!((r.objective - total).abs() < 1e-12);
    }

    #[test]
    fn identical_points_do_not_break() {
        let r = kmeans(&pts(&[&[1.0], &[1.0], &[1.0]]), 2, 3, 10).unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn argument_errors() {
        assert!(kmeans(&[], 1, 0, 10).is_err());
        assert!(kmeans(&pts(&[&[1.0]]), 2, 0, 10).is_err());
        assert!(kmeans(&pts(&[&[1.0], &[1.0, 2.0]]), 1, 0, 10).is_err());
    }

    proptest! {
        #[test]
        fn objective_never_increases(raw in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40), k in 1usize..4, seed in any::<u64>()) {
            let p: Vec<Vec<f64>> = raw.iter().map(|(a, b)| vec![*a, *b]).collect();
            let k = k.min(p.len());
            let r = kmeans(&p, k, seed, 100).unwrap();
            for w in r.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "history {:?}", r.history);
            }
            // fixed point: every point sits with its nearest centroid
            for (q, &a) in p.iter().zip(&r.assignments) {
                prop_assert!(sq_dist(q, &r.centroids[a]) <= nearest(q, &r.centroids).1 + 1e-9);
            }
        }

        #[test]
        fn at_least_brute_force_optimum(raw in proptest::collection::vec(-20.0f64..20.0, 2..=8), seed in any::<u64>()) {
            let p: Vec<Vec<f64>> = raw.iter().map(|x| vec![*x]).collect();
            let r = kmeans(&p, 2, seed, 100).unwrap();
            prop_assert!(r.objective >= brute_force_two(&raw) - 1e-9);
        }

        #[test]
        fn optimal_when_well_separated(a in proptest::collection::vec(0.0f64..1.0, 1..=4), b in proptest::collection::vec(0.0f64..1.0, 1..=4), gap in 2.0f64..50.0, seed in any::<u64>()) {
            let raw: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| x + 1.0 + gap)).collect();
            let p: Vec<Vec<f64>> = raw.iter().map(|x| vec![*x]).collect();
            let r = kmeans(&p, 2, seed, 100).unwrap();
            prop_assert!((r.objective - brute_force_two(&raw)).abs() < 1e-9);
        }
    }
}
