use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::math::squared_distance;

pub const LLOYD_ITERATION_CAP: usize = 100;

/// Result of Lloyd's algorithm. `labels[i]` is the cluster of the i-th input point.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn assignments(&self, ids: &[ItemId]) -> BTreeMap<ItemId, usize> {
        ids.iter().copied().zip(self.labels.iter().copied()).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub(crate) fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn nearest(centers: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // Guard against rounding landing on a zero-weight tail point.
            if d2[pick] == 0.0 {
                pick = d2
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &w)| if w > d2[b] { i } else { b });
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[next].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(squared_distance(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments stop
/// changing or after [`LLOYD_ITERATION_CAP`] iterations. A cluster that
/// empties is re-seeded with the point farthest from its current center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    let distinct = distinct_count(points);
    if k == 0 || k > distinct {
        return Err(Error::OutOfRange {
            what: "k",
            value: k,
            min: 1,
            max: distinct,
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "kmeans points",
            expected: dim,
            got: p.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < LLOYD_ITERATION_CAP {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (j, d) = nearest(&centers, p);
            inertia += d;
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centers[j] = sums[j].iter().map(|s| s / n).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, squared_distance(p, &centers[labels[i]])))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b })
                    .0;
                centers[j] = points[far].clone();
            }
        }
    }

    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centers[l]))
        .sum();
    Ok(ClusterModel {
        k,
        centers,
        labels,
        inertia,
        iterations,
        converged,
        inertia_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inertia_of(points: &[Vec<f64>], groups: &[&[usize]]) -> f64 {
        groups
            .iter()
            .map(|g| {
                let dim = points[0].len();
                let mut c = vec![0.0; dim];
                for &i in *g {
                    for (cj, x) in c.iter_mut().zip(&points[i]) {
                        *cj += x / g.len() as f64;
                    }
                }
                g.iter().map(|&i| squared_distance(&points[i], &c)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn square_corners_split_into_close_pairs() {
        // Pairs {0,1} and {2,3} are 1 apart; the pairs are 10 apart.
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ];
        // Oracle: enumerate the balanced 2-partitions and keep the lowest inertia.
        let candidates: [[&[usize]; 2]; 3] = [
            [&[0, 1], &[2, 3]],
            [&[0, 2], &[1, 3]],
            [&[0, 3], &[1, 2]],
        ];
        let best = candidates
            .iter()
            .min_by(|a, b| inertia_of(&pts, *a).total_cmp(&inertia_of(&pts, *b)))
            .unwrap();
        assert_eq!(best[0], &[0, 1]);
        for seed in 0..10 {
            let m = kmeans(&pts, 2, seed).unwrap();
            assert!(m.converged);
            let mut centers = m.centers.clone();
            centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(centers, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
            assert_eq!(m.inertia, inertia_of(&pts, &best[..]));
        }
    }

    #[test]
    fn single_cluster_is_centroid() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let m = kmeans(&pts, 1, 0).unwrap();
        assert_eq!(m.centers, vec![vec![3.0, 3.0]]);
        let same = vec![vec![2.5, -1.0]; 4];
        let m = kmeans(&same, 1, 9).unwrap();
        assert_eq!(m.centers[0], vec![2.5, -1.0]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn k_out_of_range() {
        let pts = vec![vec![0.0], vec![0.0], vec![1.0]];
        assert!(matches!(kmeans(&pts, 3, 0), Err(Error::OutOfRange { max: 2, .. })));
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&pts, 2, 0).is_ok());
    }

    proptest! {
        #[test]
        fn inertia_never_increases(raw in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40), k in 1usize..5, seed in 0u64..1000) {
            let pts: Vec<Vec<f64>> = raw.iter().map(|&(x, y)| vec![x, y]).collect();
            prop_assume!(k <= distinct_count(&pts));
            let m = kmeans(&pts, k, seed).unwrap();
            for w in m.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            if m.converged {
                for (p, &l) in pts.iter().zip(&m.labels) {
                    let (j, d) = nearest(&m.centers, p);
                    prop_assert!(j == l || squared_distance(p, &m.centers[l]) <= d);
                }
            }
            let again = kmeans(&pts, k, seed).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
