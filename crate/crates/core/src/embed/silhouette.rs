use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use super::kmeans::{distinct_count, kmeans, ClusterModel};
use crate::error::{Error, Result};
use crate::math::distance;

/// `(b - a) / max(a, b)`, defined as 0 when both are 0.
pub fn silhouette_value(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == 0.0 {
        0.0
    } else {
        (b - a) / m
    }
}

/// Per-sample silhouette. `a` is the mean distance to the other members of
/// the sample's cluster, `b` the smallest mean distance to another cluster.
/// Members of singleton clusters score 0.
pub fn silhouette_samples(points: &[Vec<f64>], model: &ClusterModel) -> Result<Vec<f64>> {
    if model.k < 2 {
        return Err(Error::OutOfRange {
            what: "k",
            value: model.k,
            min: 2,
            max: usize::MAX,
        });
    }
    if model.labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            context: "silhouette labels",
            expected: points.len(),
            got: model.labels.len(),
        });
    }
    let sizes = model.cluster_sizes();
    if sizes.contains(&0) {
        return Err(Error::Empty("silhouette requires every cluster to be nonempty"));
    }

    let mut scores = Vec::with_capacity(points.len());
    let mut sums = vec![0.0; model.k];
    for (i, p) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[model.labels[j]] += distance(p, q);
            }
        }
        let own = model.labels[i];
        if sizes[own] == 1 {
            scores.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..model.k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        scores.push(silhouette_value(a, b));
    }
    Ok(scores)
}

/// Mean per-sample silhouette.
pub fn silhouette(points: &[Vec<f64>], model: &ClusterModel) -> Result<f64> {
    let s = silhouette_samples(points, model)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// The `k` in `k_range` whose k-means clustering has the highest mean
/// silhouette; ties go to the smaller `k`. Returns the scores alongside.
pub fn select_cluster_count(
    points: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if k_range.is_empty() {
        return Err(Error::Empty("cluster count range"));
    }
    let distinct = distinct_count(points);
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > distinct {
        return Err(Error::OutOfRange {
            what: "k",
            value: if lo < 2 { lo } else { hi },
            min: 2,
            max: distinct,
        });
    }
    let mut scores = Vec::new();
    let mut best = (lo, f64::NEG_INFINITY);
    for k in k_range {
        let model = kmeans(points, k, seed)?;
        // Re-seeding can still leave a duplicate-point cluster empty; score it worst.
        let s = silhouette(points, &model).unwrap_or(-1.0);
        scores.push((k, s));
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok((best.0, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(labels: Vec<usize>, k: usize) -> ClusterModel {
        ClusterModel {
            k,
            centers: vec![],
            labels,
            inertia: 0.0,
            iterations: 0,
            converged: true,
            inertia_trace: vec![],
        }
    }

    #[test]
    fn single_sample_two_thirds() {
        assert_eq!(silhouette_value(1.0, 3.0), 2.0 / 3.0);
        // Point 0 sits 1 from its cluster mate and 3 from the other cluster.
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let s = silhouette_samples(&pts, &model(vec![0, 0, 1], 2)).unwrap();
        assert_eq!(s[0], 2.0 / 3.0);
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn tight_separated_clusters_score_high() {
        let mut pts = Vec::new();
        for i in 0..5 {
            pts.push(vec![0.01 * i as f64, 0.0]);
            pts.push(vec![100.0 + 0.01 * i as f64, 0.0]);
        }
        let labels = (0..10).map(|i| i % 2).collect();
        assert!(silhouette(&pts, &model(labels, 2)).unwrap() > 0.9);
    }

    #[test]
    fn wrong_assignment_scores_negative() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        // Each point is grouped with its far partner.
        let s = silhouette(&pts, &model(vec![0, 1, 0, 1], 2)).unwrap();
        assert!(s < 0.0);
    }

    #[test]
    fn identical_points_score_zero_and_errors() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![1.0]];
        let s = silhouette_samples(&pts, &model(vec![0, 0, 1, 1], 2)).unwrap();
        assert_eq!(s, vec![0.0; 4]);
        assert!(silhouette(&pts, &model(vec![0; 4], 1)).is_err());
        assert!(silhouette(&pts, &model(vec![0; 4], 2)).is_err());
    }

    pub(crate) fn blobs(seed: u64, centers: &[[f64; 2]], per: usize, spread: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for c in centers {
            for _ in 0..per {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen();
                let r = (-2.0 * u1.ln()).sqrt() * spread;
                let t = 2.0 * core::f64::consts::PI * u2;
                pts.push(vec![c[0] + r * t.cos(), c[1] + r * t.sin()]);
            }
        }
        pts
    }

    #[test]
    fn recovers_three_planted_blobs() {
        let centers = [[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]];
        for seed in 0..20 {
            let pts = blobs(seed, &centers, 30, 0.6);
            let (k, _) = select_cluster_count(&pts, 2..=8, seed).unwrap();
            assert_eq!(k, 3, "seed {seed}");
        }
    }

    #[test]
    fn degenerate_ranges() {
        let pts = blobs(1, &[[0.0, 0.0], [5.0, 5.0]], 5, 0.3);
        assert_eq!(select_cluster_count(&pts, 2..=2, 0).unwrap().0, 2);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 3..=2;
        assert_eq!(select_cluster_count(&pts, empty, 0), Err(Error::Empty("cluster count range")));
        assert!(select_cluster_count(&pts, 1..=3, 0).is_err());
        assert!(select_cluster_count(&pts, 2..=11, 0).is_err());
    }

    proptest! {
        #[test]
        fn scores_bounded_and_mean_consistent(raw in proptest::collection::vec(-3.0f64..3.0, 6..30), k in 2usize..4, seed in 0u64..100) {
            let pts: Vec<Vec<f64>> = raw.chunks(2).filter(|c| c.len() == 2).map(|c| c.to_vec()).collect();
            prop_assume!(k <= distinct_count(&pts));
            let m = kmeans(&pts, k, seed).unwrap();
            prop_assume!(m.cluster_sizes().iter().all(|&s| s > 0));
            let per = silhouette_samples(&pts, &m).unwrap();
            for &s in &per {
                prop_assert!((-1.0..=1.0).contains(&s));
            }
            let mean = silhouette(&pts, &m).unwrap();
            prop_assert_eq!(mean, per.iter().sum::<f64>() / per.len() as f64);
        }
    }
}
