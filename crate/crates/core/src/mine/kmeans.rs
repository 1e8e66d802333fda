//! Seeded K-Means (k-means++ initialization, Lloyd iterations, restarts).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::splitmix64;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k: 5,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            restarts: 4,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("clusters must be >= 2, got {}", self.k)));
        }
        if self.max_iter == 0 || self.restarts == 0 {
            return Err(Error::Config("max_iter and restarts must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<K> {
    /// point ids in ascending order
    pub ids: Vec<K>,
    /// `labels[i]` is the cluster of `ids[i]`
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// inertia after every assignment step of the winning restart
    pub history: Vec<f64>,
}

impl<K: Ord> ClusterAssignment<K> {
    pub fn label_of(&self, id: &K) -> Option<usize> {
        self.ids.binary_search(id).ok().map(|i| self.labels[i])
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances of each point to its labeled centroid.
pub fn inertia(points: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

/// Clusters `points` into `config.k` groups.
///
/// Points are sorted by id before initialization, so the result does not
/// depend on input order. The restart with the lowest inertia wins (ties go
/// to the earliest restart).
pub fn kmeans<K: Ord + Clone>(points: Vec<(K, Vec<f64>)>, config: &ClusteringConfig) -> Result<ClusterAssignment<K>> {
    config.validate()?;
    let mut points = points;
    points.sort_by(|a, b| a.0.cmp(&b.0));
    if points.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("duplicate point id in clustering input"));
    }
    if points.len() < config.k {
        return Err(Error::invalid(format!(
            "k-means needs at least k = {} points, got {}",
            config.k,
            points.len()
        )));
    }
    let dim = points[0].1.len();
    if let Some((_, v)) = points.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    let (ids, vectors): (Vec<K>, Vec<Vec<f64>>) = points.into_iter().unzip();
    let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();

    let mut best: Option<Run> = None;
    for restart in 0..config.restarts {
        let seed = splitmix64(config.seed ^ splitmix64(restart as u64 + 1));
        let run = lloyd(&refs, config, seed);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts >= 1");
    Ok(ClusterAssignment {
        ids,
        labels: best.labels,
        centroids: best.centroids,
        inertia: best.inertia,
        history: best.history,
    })
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd(points: &[&[f64]], config: &ClusteringConfig, seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, config.k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();

    for _ in 0..config.max_iter {
        labels = assign(points, &centroids);
        repair_empty_clusters(points, &mut labels, &mut centroids);
        history.push(inertia(points, &labels, &centroids));

        let updated = means(points, &labels, &centroids);
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if movement < config.tol || movement == 0.0 {
            break;
        }
    }
    let final_inertia = inertia(points, &labels, &centroids);
    history.push(final_inertia);
    Run {
        labels,
        centroids,
        inertia: final_inertia,
        history,
    }
}

fn kmeans_plus_plus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on an already-chosen point
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every point coincides with a centroid; take the first unused index
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> Vec<usize> {
    par::map(points, |p| {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    })
}

/// Moves the point farthest from its centroid (taken from a cluster with
/// more than one member) into each empty cluster and re-centres there.
fn repair_empty_clusters(points: &[&[f64]], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let l = labels[i];
            if counts[l] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[l]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { continue };
        counts[labels[i]] -= 1;
        labels[i] = c;
        counts[c] = 1;
        centroids[c] = points[i].to_vec();
    }
}

fn means(points: &[&[f64]], labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((s, n), prev)| {
            if n == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}
