use std::cmp::Ordering;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The `k` nearest neighbours of every sample plus the next-nearest
/// ("boundary") sample, with the distances to each.
///
/// Neighbour lists are ordered by ascending distance; ties go to the
/// smaller index. A sample is never its own neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets<T> {
    k: usize,
    neighbors: Array2<usize>,
    distances: Array2<T>,
    boundary: Vec<usize>,
    boundary_distance: Vec<T>,
}

impl<T: Scalar> NeighborSets<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.neighbors.nrows()
    }

    /// Neighbour indices of row `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        let k = self.k;
        &self.neighbors.as_slice().expect("standard layout")[i * k..(i + 1) * k]
    }

    /// Distances from `i` to its neighbours, aligned with [`Self::neighbors`].
    pub fn distances(&self, i: usize) -> &[T] {
        let k = self.k;
        &self.distances.as_slice().expect("standard layout")[i * k..(i + 1) * k]
    }

    /// Index of the (k+1)-th nearest sample of `i`.
    pub fn boundary_index(&self, i: usize) -> usize {
        self.boundary[i]
    }

    pub fn boundary_distance(&self, i: usize) -> T {
        self.boundary_distance[i]
    }

    pub fn neighbor_matrix(&self) -> &Array2<usize> {
        &self.neighbors
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).contains(&j)
    }
}

fn order<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Builds neighbour sets of size `k` from a distance matrix.
///
/// Requires `1 <= k <= n - 2` so that every row also has a boundary sample.
pub fn knn_sets<T: Scalar>(d: &DistanceMatrix<T>, k: usize) -> Result<NeighborSets<T>> {
    let n = d.n();
    if k < 1 || k + 2 > n {
        return Err(Error::Config(format!(
            "neighbour count k = {k} out of range [1, {}] for {n} samples",
            n.saturating_sub(2)
        )));
    }
    let values = d.values();
    let mut neighbors = Array2::<usize>::zeros((n, k));
    let mut distances = Array2::<T>::zeros((n, k));
    let mut boundary = vec![0usize; n];
    let mut boundary_distance = vec![T::zero(); n];

    neighbors
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(distances.axis_iter_mut(Axis(0)).into_par_iter())
        .zip(
            boundary
                .par_iter_mut()
                .zip(boundary_distance.par_iter_mut()),
        )
        .enumerate()
        .for_each(|(i, ((mut nrow, mut drow), (b, bd)))| {
            let row = values.row(i);
            let mut cand: Vec<(T, usize)> = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &v)| (v, j))
                .collect();
            // k + 1 <= cand.len() is guaranteed by the range check
            cand.select_nth_unstable_by(k, order);
            cand[..=k].sort_unstable_by(order);
            for (slot, &(dist, j)) in cand[..k].iter().enumerate() {
                nrow[slot] = j;
                drow[slot] = dist;
            }
            *b = cand[k].1;
            *bd = cand[k].0;
        });

    Ok(NeighborSets {
        k,
        neighbors,
        distances,
        boundary,
        boundary_distance,
    })
}
