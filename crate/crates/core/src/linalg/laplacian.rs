use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unnormalised Laplacian of the symmetrised graph `A = (S + Sᵀ) / 2`:
/// `L = diag(A·1) − A`.
pub fn laplacian<T: Scalar>(s: ArrayView2<T>) -> Result<Array2<T>> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!(
            "affinity matrix must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if let Some(((i, j), v)) = s
        .indexed_iter()
        .find(|(_, v)| !v.is_finite() || **v < T::zero())
    {
        return Err(Error::Validation(format!(
            "affinity entry ({i}, {j}) = {v} must be finite and nonnegative"
        )));
    }
    Ok(laplacian_unchecked(s))
}

pub fn laplacian_unchecked<T: Scalar>(s: ArrayView2<T>) -> Array2<T> {
    let n = s.nrows();
    let half = T::lit(0.5);
    let mut l = Array2::<T>::zeros((n, n));
    l.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut degree = T::zero();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let a = (s[[i, j]] + s[[j, i]]) * half;
                row[j] = -a;
                degree += a;
            }
            row[i] = degree;
        });
    l
}
