//! The consensus graph and its spectral embedding.
//!
//! Each consensus row solves
//! `min_p Σ_v w_v^r ‖p − S^v_i‖² + β ⟨p, e_i⟩` over the full simplex, where
//! `e` holds squared distances between rows of the embedding `F`. Since the
//! quadratic part is isotropic the solution is the simplex projection of
//! the weighted mean of the view rows shifted by `−β e_i / (2 Σ_v w_v^r)`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    laplacian_unchecked, project_to_simplex_into, smallest_eigenpairs_and_next, EigenOptions,
};
use crate::scalar::Scalar;
use crate::view_graph::ViewAffinity;
use crate::weights::ViewWeights;

pub const BETA_MIN: f64 = 1e-8;
pub const BETA_MAX: f64 = 1e8;

/// Fused graph `S*` with its Laplacian and bottom spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGraph<T> {
    pub(crate) s_star: Array2<T>,
    pub(crate) laplacian: Array2<T>,
    pub(crate) embedding: Array2<T>,
    /// c + 1 smallest eigenvalues (c when c = n).
    pub(crate) spectrum: Array1<T>,
    pub(crate) beta: T,
}

impl<T: Scalar> ConsensusGraph<T> {
    /// Builds the graph for a given `S*`, computing its Laplacian and the
    /// `c` (+1) smallest eigenpairs.
    pub fn from_affinity(
        s_star: Array2<T>,
        c: usize,
        beta: T,
        opts: &EigenOptions,
        warm: Option<ArrayView2<T>>,
    ) -> Result<Self> {
        let (laplacian, embedding, spectrum) = update_embedding_with(s_star.view(), c, opts, warm)?;
        Ok(Self {
            s_star,
            laplacian,
            embedding,
            spectrum,
            beta,
        })
    }

    pub fn s_star(&self) -> &Array2<T> {
        &self.s_star
    }

    pub fn laplacian(&self) -> &Array2<T> {
        &self.laplacian
    }

    /// `n × c` orthonormal embedding `F`.
    pub fn embedding(&self) -> &Array2<T> {
        &self.embedding
    }

    pub fn n_clusters(&self) -> usize {
        self.embedding.ncols()
    }

    /// The `c` smallest Laplacian eigenvalues, ascending.
    pub fn eigenvalues(&self) -> ndarray::ArrayView1<'_, T> {
        self.spectrum.slice(s![..self.n_clusters()])
    }

    /// `c + 1` smallest eigenvalues when available.
    pub fn spectrum(&self) -> &Array1<T> {
        &self.spectrum
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `tr(Fᵀ L* F)`.
    pub fn embedding_trace(&self) -> T {
        trace_form(&self.laplacian, &self.embedding)
    }
}

pub(crate) fn trace_form<T: Scalar>(l: &Array2<T>, f: &Array2<T>) -> T {
    let lf = l.dot(f);
    lf.iter().zip(f.iter()).map(|(&a, &b)| a * b).sum()
}

/// `e_ij = ‖f_i − f_j‖²` for the rows of `F`.
pub fn embedding_distances<T: Scalar>(f: ArrayView2<T>) -> Array2<T> {
    let n = f.nrows();
    let mut e = Array2::<T>::zeros((n, n));
    e.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let fi = f.row(i);
            for j in 0..n {
                if j != i {
                    row[j] = fi
                        .iter()
                        .zip(f.row(j))
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum();
                }
            }
        });
    e
}

/// Solves every consensus row exactly; rows are independent.
pub fn update_consensus<T: Scalar>(
    views: &[ViewAffinity<T>],
    weights: &ViewWeights<T>,
    e: ArrayView2<T>,
    beta: T,
) -> Result<Array2<T>> {
    consensus_from_coefficients(views, &weights.powered(), e, beta)
}

/// [`update_consensus`] with the fusion coefficients `w_v^r` given
/// directly.
pub fn consensus_from_coefficients<T: Scalar>(
    views: &[ViewAffinity<T>],
    coeffs: &[T],
    e: ArrayView2<T>,
    beta: T,
) -> Result<Array2<T>> {
    let m = views.len();
    if m == 0 || coeffs.len() != m {
        return Err(Error::Dimension(format!(
            "{m} view graphs but {} weights",
            coeffs.len()
        )));
    }
    let n = views[0].n();
    if views.iter().any(|v| v.n() != n) || e.nrows() != n || e.ncols() != n {
        return Err(Error::Dimension(
            "view graphs and embedding distances disagree on sample count".into(),
        ));
    }
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(Error::Config(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    let total: T = coeffs.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Config("all view weights are zero".into()));
    }
    let shift = beta / (T::lit(2.0) * total);

    let mut out = Array2::<T>::zeros((n, n));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each_init(
            || (vec![T::zero(); n], Vec::with_capacity(n)),
            |(target, scratch), (i, mut row)| {
                for (t, &ev) in target.iter_mut().zip(e.row(i)) {
                    *t = -shift * ev;
                }
                for (view, &cv) in views.iter().zip(coeffs) {
                    let (idx, vals) = view.row(i);
                    let scale = cv / total;
                    for (&j, &v) in idx.iter().zip(vals) {
                        target[j] += scale * v;
                    }
                }
                let slot = row.as_slice_mut().expect("standard layout");
                project_to_simplex_into(target, slot, scratch);
            },
        );
    Ok(out)
}

/// Value of one consensus row subproblem.
pub fn consensus_row_objective<T: Scalar>(
    p: &[T],
    view_rows: &[Vec<T>],
    coeffs: &[T],
    e_row: &[T],
    beta: T,
) -> T {
    let fusion: T = view_rows
        .iter()
        .zip(coeffs)
        .map(|(row, &c)| {
            c * p
                .iter()
                .zip(row)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>()
        })
        .sum();
    let linear: T = p.iter().zip(e_row).map(|(&a, &b)| a * b).sum();
    fusion + beta * linear
}

/// Laplacian of `S*` and its `c` smallest eigenpairs (computed together
/// with the next eigenvalue so the component count can be judged).
pub fn update_embedding<T: Scalar>(
    s_star: ArrayView2<T>,
    c: usize,
) -> Result<(Array2<T>, Array1<T>)> {
    let (_, f, spectrum) = update_embedding_with(s_star, c, &EigenOptions::default(), None)?;
    Ok((f, spectrum.slice(s![..c]).to_owned()))
}

pub(crate) fn update_embedding_with<T: Scalar>(
    s_star: ArrayView2<T>,
    c: usize,
    opts: &EigenOptions,
    warm: Option<ArrayView2<T>>,
) -> Result<(Array2<T>, Array2<T>, Array1<T>)> {
    let n = s_star.nrows();
    if s_star.ncols() != n {
        return Err(Error::Dimension("consensus graph must be square".into()));
    }
    if c < 1 || c > n {
        return Err(Error::Config(format!(
            "cluster count {c} out of range [1, {n}]"
        )));
    }
    let l = laplacian_unchecked(s_star);
    let (pairs, next) = smallest_eigenpairs_and_next(l.view(), c, opts, warm)?;
    let spectrum = pairs.values.iter().copied().chain(next).collect();
    Ok((l, pairs.vectors, spectrum))
}

/// Threshold below which a Laplacian eigenvalue counts as zero:
/// `1e-6` times the mean degree.
pub fn zero_tolerance<T: Scalar>(laplacian: &Array2<T>) -> T {
    let n = laplacian.nrows().max(1);
    let mean_degree = laplacian.diag().iter().copied().sum::<T>() / T::from_usize_lossy(n);
    T::lit(1e-6) * mean_degree
}

/// Adjusts β so the Laplacian ends up with exactly `c` zero eigenvalues.
///
/// `theta` holds the `c + 1` smallest eigenvalues. Too few components
/// (the first `c` do not sum to zero) doubles β; too many (the `c + 1`-th
/// is also zero) halves it. The result is clamped to `[1e-8, 1e8]`.
pub fn adapt_beta<T: Scalar>(theta: &[T], c: usize, beta: T, zero_tol: T) -> T {
    let head: T = theta.iter().take(c).copied().sum();
    let next = if head > zero_tol {
        beta * T::lit(2.0)
    } else if theta.get(c).is_some_and(|&t| t < zero_tol) {
        beta * T::lit(0.5)
    } else {
        beta
    };
    next.max(T::lit(BETA_MIN)).min(T::lit(BETA_MAX))
}
