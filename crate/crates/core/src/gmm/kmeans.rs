//! Seeded k-means (k-means++ seeding, Lloyd iterations) used to initialize EM.

use rand::Rng as _;

use crate::data::squared_euclidean;
use crate::rng::Rng;

pub const MAX_LLOYD_ITERATIONS: usize = 50;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

fn closest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_euclidean(center, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(data: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.iter().map(|x| squared_euclidean(x, data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            // Every remaining point coincides with a center.
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(squared_euclidean(x, data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].to_vec()).collect()
}

/// Requires `1 <= k <= data.len()`. Empty clusters keep their previous center.
pub fn kmeans(data: &[&[f64]], k: usize, rng: &mut Rng) -> KMeans {
    assert!(k >= 1 && k <= data.len(), "k-means needs 1 <= k <= n");
    let dim = data[0].len();
    let mut centers = plus_plus_seeds(data, k, rng);
    let mut labels: Vec<usize> = data.iter().map(|x| closest(&centers, x).0).collect();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = data.iter().map(|x| closest(&centers, x).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    KMeans { centers, labels, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn separates_two_obvious_groups() {
        let pts: Vec<Vec<f64>> =
            vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![0.0, 0.1], vec![10.0, 10.0], vec![10.1, 10.0], vec![10.0, 10.1]];
        let data: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let km = kmeans(&data, 2, &mut rng::seeded(1));
        assert_eq!(km.labels[0], km.labels[1]);
        assert_eq!(km.labels[0], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[4]);
        assert_ne!(km.labels[0], km.labels[3]);
        assert!(km.iterations <= MAX_LLOYD_ITERATIONS);
    }

    #[test]
    fn duplicate_points_still_yield_k_centers() {
        let pts = [vec![1.0], vec![1.0], vec![1.0]];
        let data: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let km = kmeans(&data, 3, &mut rng::seeded(0));
        assert_eq!(km.centers.len(), 3);
    }
}
