//! One-dimensional k-means for activity segmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    /// Cluster of each point; clusters are numbered by ascending centroid.
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Within-cluster sum of squares after every update step of the best
    /// restart.
    pub history: Vec<f64>,
}

fn nearest(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    for (j, c) in centroids.iter().enumerate() {
        if (x - c).abs() < (x - centroids[best]).abs() {
            best = j;
        }
    }
    best
}

fn inertia(x: &[f64], labels: &[usize], centroids: &[f64]) -> f64 {
    x.iter()
        .zip(labels)
        .map(|(v, &l)| (v - centroids[l]).powi(2))
        .sum()
}

fn plus_plus_init(x: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = vec![x[rng.random_range(0..x.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = x
            .iter()
            .map(|&v| (v - centroids[nearest(v, &centroids)]).powi(2))
            .collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            centroids.push(x[rng.random_range(0..x.len())]);
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = x.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        centroids.push(x[pick]);
    }
    centroids
}

fn lloyd(x: &[f64], mut centroids: Vec<f64>) -> KMeansFit {
    let k = centroids.len();
    let mut labels: Vec<usize> = x.iter().map(|&v| nearest(v, &centroids)).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in x.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1;
        }
        for j in 0..k {
            // An emptied cluster keeps its centroid.
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        history.push(inertia(x, &labels, &centroids));
        let next: Vec<usize> = x.iter().map(|&v| nearest(v, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    // Renumber by ascending centroid.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let labels: Vec<usize> = labels.iter().map(|&l| rank[l]).collect();
    let centroids: Vec<f64> = order.iter().map(|&j| centroids[j]).collect();
    KMeansFit {
        inertia: inertia(x, &labels, &centroids),
        labels,
        centroids,
        history,
    }
}

/// Best of `restarts` seeded k-means++ runs by final inertia.
pub fn kmeans_1d(x: &[f64], k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 || x.len() < k {
        return Err(Error::InvalidInput(format!(
            "k-means with k={k} needs at least k points, got {}",
            x.len()
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let fit = lloyd(x, plus_plus_init(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub k: usize,
    /// `None` when clusters are pure (zero within-cluster dispersion).
    pub calinski_harabasz: Option<f64>,
    pub davies_bouldin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityClusters {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Centroids on the log(1 + clicks) scale, ascending.
    pub centroids: Vec<f64>,
    pub scores: Vec<ClusterScore>,
}

fn score(x: &[f64], fit: &KMeansFit) -> ClusterScore {
    let k = fit.centroids.len();
    let n = x.len() as f64;
    let grand = x.iter().sum::<f64>() / n;
    let mut sizes = vec![0usize; k];
    let mut spread = vec![0.0; k];
    for (v, &l) in x.iter().zip(&fit.labels) {
        sizes[l] += 1;
        spread[l] += (v - fit.centroids[l]).abs();
    }
    let between: f64 = (0..k)
        .map(|j| sizes[j] as f64 * (fit.centroids[j] - grand).powi(2))
        .sum();
    let within = fit.inertia;
    let ch = (within > 0.0 && x.len() > k)
        .then(|| (between / (k - 1) as f64) / (within / (n - k as f64)));
    let s: Vec<f64> = (0..k)
        .map(|j| {
            if sizes[j] > 0 {
                spread[j] / sizes[j] as f64
            } else {
                0.0
            }
        })
        .collect();
    let mut db = Some(0.0);
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in (0..k).filter(|&j| j != i) {
            let sep = (fit.centroids[i] - fit.centroids[j]).abs();
            if sep == 0.0 {
                db = None;
                break;
            }
            worst = worst.max((s[i] + s[j]) / sep);
        }
        db = db.map(|d| d + worst / k as f64);
    }
    ClusterScore {
        k,
        calinski_harabasz: ch,
        davies_bouldin: db,
    }
}

/// Segments users by activity: k-means on `log(1 + clicks)` for every
/// candidate `k`, choosing the one with the highest Calinski-Harabasz
/// index. A candidate whose clusters are pure counts as the best possible
/// and the smallest such `k` wins. Candidates above the number of distinct
/// values are skipped.
pub fn activity_clusters(clicks: &[u64], ks: &[usize], seed: u64) -> Result<ActivityClusters> {
    activity_clusters_with(clicks, ks, DEFAULT_RESTARTS, seed)
}

/// `activity_clusters` with an explicit number of k-means restarts.
pub fn activity_clusters_with(
    clicks: &[u64],
    ks: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<ActivityClusters> {
    let max_k = ks
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidInput("no cluster count candidates".into()))?;
    if ks.contains(&0) || ks.contains(&1) {
        return Err(Error::InvalidInput(
            "cluster count candidates must be at least 2".into(),
        ));
    }
    if clicks.len() < max_k {
        return Err(Error::InvalidInput(format!(
            "{} users cannot form {max_k} clusters",
            clicks.len()
        )));
    }
    let x: Vec<f64> = clicks.iter().map(|&c| (c as f64).ln_1p()).collect();
    let mut distinct = x.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate(
            "all users have the same click count".into(),
        ));
    }
    let mut chosen: Option<(KMeansFit, f64)> = None;
    let mut scores = Vec::new();
    for &k in ks.iter().filter(|&&k| k <= distinct.len()) {
        let fit = kmeans_1d(&x, k, restarts, seed)?;
        let s = score(&x, &fit);
        let merit = s.calinski_harabasz.unwrap_or(f64::INFINITY);
        if chosen.as_ref().is_none_or(|(_, m)| merit > *m) {
            chosen = Some((fit, merit));
        }
        scores.push(s);
    }
    let (fit, _) = chosen
        .ok_or_else(|| Error::Degenerate("no candidate k fits the distinct click counts".into()))?;
    Ok(ActivityClusters {
        k: fit.centroids.len(),
        labels: fit.labels,
        centroids: fit.centroids,
        scores,
    })
}
