//! Reading cluster labels off a consensus graph.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// Connected components of the thresholded consensus graph.
    Components,
    /// k-means on the row-normalised spectral embedding.
    EmbeddingFallback,
}

impl std::fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMethod::Components => "components",
            ClusterMethod::EmbeddingFallback => "embedding_fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult<T> {
    pub labels: Vec<usize>,
    pub method: ClusterMethod,
    /// Connected components found at `threshold_used`, whichever method
    /// produced the labels.
    pub component_count: usize,
    pub threshold_used: T,
}

/// Default edge threshold: `1e-8` times the largest row sum of the
/// symmetrised graph.
pub fn default_threshold<T: Scalar>(s_star: ArrayView2<T>) -> T {
    let n = s_star.nrows();
    let half = T::lit(0.5);
    let max_row = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (s_star[[i, j]] + s_star[[j, i]]) * half)
                .sum::<T>()
        })
        .fold(T::zero(), T::max);
    T::lit(1e-8) * max_row
}

/// Connected components of the graph with an edge `(i, j)` whenever
/// `(S_ij + S_ji) / 2 > eps`.
///
/// Component ids are assigned in order of each component's smallest
/// sample index.
pub fn extract_components<T: Scalar>(s_star: ArrayView2<T>, eps: T) -> (Vec<usize>, usize) {
    let n = s_star.nrows();
    let half = T::lit(0.5);
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if labels[j] == usize::MAX && (s_star[[i, j]] + s_star[[j, i]]) * half > eps {
                    labels[j] = count;
                    queue.push_back(j);
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centroids: Array2<T>,
    /// Within-cluster sum of squared distances.
    pub inertia: T,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

/// Lloyd's k-means with random distinct points as initial centroids.
///
/// Restart `r` draws from its own ChaCha stream of `seed`, so the result
/// does not depend on how restarts are scheduled; the lowest inertia wins
/// and ties go to the earlier restart. A cluster that empties during an
/// iteration is re-seeded with the point farthest from its current
/// centroid.
///
/// # Panics
///
/// Panics if `c` is zero or exceeds the number of rows.
pub fn kmeans<T: Scalar>(
    data: ArrayView2<T>,
    c: usize,
    seed: u64,
    opts: KMeansOptions,
) -> KMeansResult<T> {
    let n = data.nrows();
    assert!(
        c >= 1 && c <= n,
        "k-means needs 1 <= c <= n (c = {c}, n = {n})"
    );
    let runs: Vec<KMeansResult<T>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(data, c, &mut rng, opts.max_iter)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = i;
        }
    }
    runs.into_iter().nth(best).expect("at least one restart")
}

fn sq_dist<T: Scalar>(a: ndarray::ArrayView1<T>, b: ndarray::ArrayView1<T>) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn lloyd<T: Scalar>(
    data: ArrayView2<T>,
    c: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> KMeansResult<T> {
    let n = data.nrows();
    let dim = data.ncols();
    let mut centroids = Array2::<T>::zeros((c, dim));
    for (slot, idx) in sample(rng, n, c).into_iter().enumerate() {
        centroids.row_mut(slot).assign(&data.row(idx));
    }
    let mut labels = vec![0usize; n];
    let mut first = true;
    for _ in 0..max_iter {
        let changed = assign(data, &centroids, &mut labels);
        if !changed && !first {
            break;
        }
        first = false;
        recompute(data, &mut centroids, &mut labels);
    }
    assign(data, &centroids, &mut labels);
    fill_empty(data, &mut centroids, &mut labels);
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(data.row(i), centroids.row(l)))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

fn assign<T: Scalar>(data: ArrayView2<T>, centroids: &Array2<T>, labels: &mut [usize]) -> bool {
    labels
        .par_iter_mut()
        .enumerate()
        .map(|(i, label)| {
            let row = data.row(i);
            let mut best = 0;
            let mut best_d = T::infinity();
            for (k, cen) in centroids.axis_iter(Axis(0)).enumerate() {
                let d = sq_dist(row, cen);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            let changed = *label != best;
            *label = best;
            changed
        })
        .reduce(|| false, |a, b| a || b)
}

fn recompute<T: Scalar>(data: ArrayView2<T>, centroids: &mut Array2<T>, labels: &mut [usize]) {
    let c = centroids.nrows();
    let mut counts = vec![0usize; c];
    centroids.fill(T::zero());
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let mut cen = centroids.row_mut(l);
        cen += &data.row(i);
    }
    for (k, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            let scale = T::one() / T::from_usize_lossy(cnt);
            centroids.row_mut(k).mapv_inplace(|v| v * scale);
        }
    }
    if counts.contains(&0) {
        fill_empty(data, centroids, labels);
    }
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn fill_empty<T: Scalar>(data: ArrayView2<T>, centroids: &mut Array2<T>, labels: &mut [usize]) {
    let c = centroids.nrows();
    loop {
        let mut counts = vec![0usize; c];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&x| x == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(data.row(i), centroids.row(l));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids.row_mut(empty).assign(&data.row(i));
    }
}

/// Scales each row to unit length; zero rows are left unchanged.
pub fn normalize_rows<T: Scalar>(f: ArrayView2<T>) -> Array2<T> {
    let mut out = f.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Final labels for a fitted consensus graph: its connected components
/// when there are exactly `c` of them, otherwise k-means on the
/// row-normalised embedding.
pub fn assign_clusters<T: Scalar>(
    graph: &ConsensusGraph<T>,
    c: usize,
    eps: Option<T>,
    seed: u64,
) -> ClusteringResult<T> {
    let s_star = graph.s_star().view();
    let threshold = eps.unwrap_or_else(|| default_threshold(s_star));
    let (labels, count) = extract_components(s_star, threshold);
    if count == c {
        return ClusteringResult {
            labels,
            method: ClusterMethod::Components,
            component_count: count,
            threshold_used: threshold,
        };
    }
    let f = graph.embedding();
    let normalized = normalize_rows(f.view());
    let km = kmeans(
        normalized.view(),
        c.min(f.nrows()),
        seed,
        KMeansOptions::default(),
    );
    ClusteringResult {
        labels: km.labels,
        method: ClusterMethod::EmbeddingFallback,
        component_count: count,
        threshold_used: threshold,
    }
}
