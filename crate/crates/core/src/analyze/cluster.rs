use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::ActionSequence;
use crate::train::TrainedModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves further than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// A group of mispredicted sessions with similar final embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentCluster {
    pub id: usize,
    pub members: Vec<String>,
    pub centroid: Vec<f64>,
    /// Mean squared distance of the members to the centroid.
    pub dispersion: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// A cluster that loses all its points takes over the point furthest from
/// its own centroid, so every returned cluster is non-empty.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, config: KMeansConfig) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Clustering("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Clustering(format!("{} points cannot form {k} clusters", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::Clustering("points must be finite and share one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            (assignments[i], dists[i]) = nearest(p, &centroids);
        }
        repair_empty(&mut assignments, &mut dists, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < config.tol {
            break;
        }
    }
    // final assignment against the settled centroids
    let mut dists = vec![0.0; points.len()];
    for (i, p) in points.iter().enumerate() {
        (assignments[i], dists[i]) = nearest(p, &centroids);
    }
    repair_empty(&mut assignments, &mut dists, k);
    Ok(KMeansFit { assignments, centroids, iterations })
}

fn repair_empty(assignments: &mut [usize], dists: &mut [f64], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..assignments.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("n >= k leaves a cluster with spare points");
        assignments[donor] = empty;
        dists[donor] = 0.0;
    }
}

/// Clusters labeled points and summarises each cluster; members are sorted.
pub fn cluster_embeddings(ids: &[String], points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<IntentCluster>> {
    if ids.len() != points.len() {
        return Err(Error::Clustering("one id per point is required".into()));
    }
    let fit = kmeans(points, k, seed, KMeansConfig::default())?;
    let mut clusters: Vec<IntentCluster> = (0..k)
        .map(|c| {
            let centroid = {
                let members: Vec<&Vec<f64>> =
                    points.iter().zip(&fit.assignments).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
                let dim = points[0].len();
                let mut m = vec![0.0; dim];
                for p in &members {
                    for (s, x) in m.iter_mut().zip(p.iter()) {
                        *s += x;
                    }
                }
                m.iter_mut().for_each(|s| *s /= members.len() as f64);
                m
            };
            IntentCluster { id: c, members: Vec::new(), centroid, dispersion: 0.0 }
        })
        .collect();
    for ((id, p), &a) in ids.iter().zip(points).zip(&fit.assignments) {
        let cl = &mut clusters[a];
        cl.members.push(id.clone());
        cl.dispersion += sq_dist(p, &cl.centroid);
    }
    for cl in &mut clusters {
        cl.dispersion /= cl.members.len() as f64;
        cl.members.sort();
    }
    Ok(clusters)
}

/// Groups mispredicted sessions by their final LSTM embedding.
pub fn cluster_mispredicted(
    model: &TrainedModel,
    sequences: &[&ActionSequence],
    k: usize,
    seed: u64,
) -> Result<Vec<IntentCluster>> {
    use rayon::prelude::*;
    if sequences.len() < k {
        return Err(Error::Clustering(format!("{} mispredicted sessions cannot form {k} clusters", sequences.len())));
    }
    let points = sequences
        .par_iter()
        .map(|s| Ok(model.embedding(s)?.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = sequences.iter().map(|s| s.session_id.clone()).collect();
    cluster_embeddings(&ids, &points, k, seed)
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Clustering("labelings differ in length".into()));
    }
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = if n < 2.0 { 0.0 } else { sum_a * sum_b / choose2(n) };
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        // both labelings trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean silhouette coefficient; `None` unless there are 2..n clusters.
pub fn silhouette_score(points: &[Vec<f64>], assignments: &[usize]) -> Option<f64> {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    if k < 2 || k >= points.len() || points.len() != assignments.len() {
        return None;
    }
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[assignments[j]] += sq_dist(p, q).sqrt();
            }
        }
        let own = assignments[i];
        if counts[own] == 1 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Some(total / points.len() as f64)
}
