//! Spectral clustering on concatenated, per-view standardised features.

use std::sync::Arc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clusters::{kmeans, normalize_rows, KMeansOptions};
use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::{
    knn_sets, laplacian_unchecked, pairwise_distances, smallest_eigenpairs, standardize_columns,
};
use crate::scalar::Scalar;
use crate::view_graph::{init_view_affinity, LambdaMode};

pub const SPECTRAL_CONCAT: &str = "spectral_concat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub labels: Vec<usize>,
    pub method_name: String,
}

pub fn spectral_concat<T: Scalar>(
    dataset: &MultiViewDataset<T>,
    c: usize,
    k: usize,
    seed: u64,
) -> Result<BaselineResult> {
    dataset.validate()?;
    let n = dataset.n_samples();
    if c < 1 || c > n {
        return Err(Error::Config(format!(
            "cluster count {c} out of range [1, {n}]"
        )));
    }
    let blocks: Vec<Array2<T>> = dataset
        .views
        .iter()
        .map(|x| standardize_columns(x.view()))
        .collect();
    let views: Vec<ArrayView2<T>> = blocks.iter().map(|b| b.view()).collect();
    let x = concatenate(Axis(1), &views).map_err(|e| Error::Dimension(e.to_string()))?;
    let d = pairwise_distances(x.view(), false)?;
    let support = Arc::new(knn_sets(&d, k)?);
    drop(d);
    let graph = init_view_affinity(support, LambdaMode::AutoPerRow, 0)?.affinity;
    let l = laplacian_unchecked(graph.to_dense().view());
    let pairs = smallest_eigenpairs(l.view(), c)?;
    let embedding = normalize_rows(pairs.vectors.slice(s![.., ..c]));
    let km = kmeans(embedding.view(), c, seed, KMeansOptions::default());
    Ok(BaselineResult {
        labels: km.labels,
        method_name: SPECTRAL_CONCAT.to_string(),
    })
}
