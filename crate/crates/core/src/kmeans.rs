//! Deterministic Lloyd k-means over device-RGB points.
//!
//! Initialization is farthest-point greedy (globally farthest pair, then the
//! point maximizing its minimum distance to the chosen seeds), all ties broken
//! by ascending id. Together with id-sorted input this makes the clustering a
//! pure function of the point set, independent of presentation order.

use crate::color::DeviceRgb;

const MAX_ITERS: usize = 100;

/// Cluster `points` (already sorted by id ascending) into `k` groups.
///
/// Returns (centroids, assignment) where `assignment[i]` is the cluster index
/// of `points[i]`. Cluster indices are ordered so that seeds with lower ids
/// get lower indices. A cluster that empties out keeps its previous centroid.
pub(crate) fn lloyd(points: &[(u32, DeviceRgb)], k: usize) -> (Vec<DeviceRgb>, Vec<usize>) {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    debug_assert!(points.windows(2).all(|w| w[0].0 < w[1].0), "ids must be sorted");

    let seeds = greedy_seeds(points, k);
    let mut centroids: Vec<DeviceRgb> = seeds.iter().map(|&i| points[i].1).collect();

    let mut assignment = vec![0usize; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, &(_, p)) in points.iter().enumerate() {
            let c = nearest(&centroids, p);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, &(_, p)) in points.iter().enumerate() {
            let c = assignment[i];
            sums[c][0] += p.r;
            sums[c][1] += p.g;
            sums[c][2] += p.b;
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = DeviceRgb::new(sums[c][0] / n, sums[c][1] / n, sums[c][2] / n);
            }
        }
    }
    (centroids, assignment)
}

/// Index of the nearest centroid; distance ties go to the lower index.
pub(crate) fn nearest(centroids: &[DeviceRgb], p: DeviceRgb) -> usize {
    let mut best = 0;
    let mut best_d = centroids[0].distance(&p);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = c.distance(&p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

// Seed indices in id order: farthest pair first, then greedy max-min.
fn greedy_seeds(points: &[(u32, DeviceRgb)], k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![0];
    }
    let (mut si, mut sj, mut best) = (0, 1, -1.0f64);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].1.distance(&points[j].1);
            if d > best {
                best = d;
                si = i;
                sj = j;
            }
        }
    }
    let mut seeds = vec![si, sj];
    while seeds.len() < k {
        let (mut next, mut next_d) = (usize::MAX, -1.0f64);
        for i in 0..points.len() {
            if seeds.contains(&i) {
                continue;
            }
            let d = seeds
                .iter()
                .map(|&s| points[s].1.distance(&points[i].1))
                .fold(f64::INFINITY, f64::min);
            if d > next_d {
                next_d = d;
                next = i;
            }
        }
        seeds.push(next);
    }
    seeds.sort_unstable();
    seeds
}
