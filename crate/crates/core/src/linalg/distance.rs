use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric matrix of squared Euclidean distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    values: Array2<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Wraps an existing matrix after checking the distance invariants.
    pub fn from_array(values: Array2<T>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension(format!(
                "distance matrix must be square, got {}x{}",
                n,
                values.ncols()
            )));
        }
        for i in 0..n {
            if values[[i, i]] != T::zero() {
                return Err(Error::Validation(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::Validation(format!(
                        "distance ({i}, {j}) = {v} is negative or non-finite"
                    )));
                }
                let w = values[[j, i]];
                let scale = T::one().max(v.abs()).max(w.abs());
                if (v - w).abs() > T::lit(1e-12) * scale {
                    return Err(Error::Validation(format!(
                        "distance matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[[i, j]]
    }

    pub fn into_inner(self) -> Array2<T> {
        self.values
    }
}

/// Shifts each column to zero mean and scales it to unit variance.
///
/// Columns with zero variance become all zeros.
pub fn standardize_columns<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    let n = T::from_usize_lossy(x.nrows());
    let mut out = x.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        if sd > T::zero() {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.fill(T::zero());
        }
    }
    out
}

pub(crate) fn check_finite<T: Scalar>(x: ArrayView2<T>, view: Option<usize>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature { view, row, col });
        }
    }
    Ok(())
}

/// Squared Euclidean distances between the rows of `x`.
pub fn pairwise_distances<T: Scalar>(
    x: ArrayView2<T>,
    standardize: bool,
) -> Result<DistanceMatrix<T>> {
    pairwise_distances_for_view(x, standardize, None)
}

pub(crate) fn pairwise_distances_for_view<T: Scalar>(
    x: ArrayView2<T>,
    standardize: bool,
    view: Option<usize>,
) -> Result<DistanceMatrix<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 samples to compute distances, got {n}"
        )));
    }
    check_finite(x, view)?;
    let owned;
    let x = if standardize {
        owned = standardize_columns(x);
        owned.view()
    } else {
        x
    };

    let mut values = Array2::<T>::zeros((n, n));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = x.row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = x.row(j);
                row[j] = xi
                    .iter()
                    .zip(xj.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
            }
        });
    Ok(DistanceMatrix { values })
}
