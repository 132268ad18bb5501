//! Per-view locality-constrained affinity graphs.
//!
//! Row `i` of a view graph is supported on the `k` nearest neighbours of
//! sample `i` in that view and lies on the probability simplex. Both the
//! initial fit and the fusion-coupled update reduce to one simplex
//! projection per row.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{project_to_simplex_into, NeighborSets};
use crate::scalar::Scalar;

/// How the ridge weight λ on each view graph is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode<T> {
    /// A single global λ: the mean of the per-row automatic values over
    /// all views.
    Auto,
    /// Keep every row's automatic λ for the whole run.
    AutoPerRow,
    Fixed(T),
}

/// λ as seen by a row update: shared or one value per row.
#[derive(Debug, Clone, Copy)]
pub enum RowLambda<'a, T> {
    Global(T),
    PerRow(&'a [T]),
}

impl<T: Scalar> RowLambda<'_, T> {
    #[inline]
    pub fn at(&self, i: usize) -> T {
        match self {
            RowLambda::Global(v) => *v,
            RowLambda::PerRow(v) => v[i],
        }
    }
}

/// Row-stochastic affinity matrix of one view, stored as `k` weights per
/// row aligned with the view's neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewAffinity<T> {
    view_id: usize,
    support: Arc<NeighborSets<T>>,
    values: Array2<T>,
}

impl<T: Scalar> ViewAffinity<T> {
    /// Wraps an `n × k` weight table whose rows are aligned with the
    /// neighbour lists of `support` and lie on the simplex (within 1e-9).
    pub fn from_parts(
        view_id: usize,
        support: Arc<NeighborSets<T>>,
        values: Array2<T>,
    ) -> Result<Self> {
        if values.dim() != (support.n(), support.k()) {
            return Err(Error::Dimension(format!(
                "weight table is {:?}, neighbour sets are {}x{}",
                values.dim(),
                support.n(),
                support.k()
            )));
        }
        let tol = T::lit(1e-9);
        for (i, row) in values.rows().into_iter().enumerate() {
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|&v| !(v >= T::zero()) || !v.is_finite())
                || (sum - T::one()).abs() > tol
            {
                return Err(Error::Validation(format!(
                    "row {i} is not on the probability simplex"
                )));
            }
        }
        Ok(Self {
            view_id,
            support,
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn k(&self) -> usize {
        self.support.k()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn support(&self) -> &Arc<NeighborSets<T>> {
        &self.support
    }

    /// Neighbour indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let vals = self.values.row(i).to_slice().expect("standard layout");
        (self.support.neighbors(i), vals)
    }

    /// The `n × k` weight table, aligned with the neighbour lists.
    pub fn weights(&self) -> &Array2<T> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (idx, vals) = self.row(i);
        idx.iter()
            .position(|&x| x == j)
            .map_or(T::zero(), |p| vals[p])
    }

    pub fn to_dense(&self) -> Array2<T> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `Σ_ij d_ij s_ij`, the locality term of this view.
    pub fn distance_cost(&self) -> T {
        (0..self.n())
            .map(|i| {
                let (_, vals) = self.row(i);
                self.support
                    .distances(i)
                    .iter()
                    .zip(vals)
                    .map(|(&d, &s)| d * s)
                    .sum::<T>()
            })
            .sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    /// Row-weighted squared norm `Σ_i λ_i ‖s_i‖²`.
    pub fn ridge_cost(&self, lambda: RowLambda<'_, T>) -> T {
        self.values
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(i, row)| lambda.at(i) * row.iter().map(|&v| v * v).sum::<T>())
            .sum()
    }

    /// `‖S* − S^v‖²_F` without densifying the view graph.
    pub fn divergence_from(&self, s_star: ArrayView2<T>) -> T {
        (0..self.n())
            .map(|i| {
                let srow = s_star.row(i);
                let (idx, vals) = self.row(i);
                let mut total = srow.iter().map(|&v| v * v).sum::<T>();
                for (&j, &v) in idx.iter().zip(vals) {
                    let x = srow[j];
                    total += (x - v) * (x - v) - x * x;
                }
                total.max(T::zero())
            })
            .sum()
    }
}

/// Initial view graph together with the row regularisers it used.
#[derive(Debug, Clone)]
pub struct InitialAffinity<T> {
    pub affinity: ViewAffinity<T>,
    /// λ_i per row. In the automatic modes this is the smallest λ for which
    /// the unconstrained solution on the k-neighbour support is feasible.
    pub row_lambdas: Vec<T>,
}

const LAMBDA_FLOOR: f64 = 1e-8;

/// Fits the locality-constrained graph of one view:
/// `min_s Σ_j d_ij s_j + λ‖s‖²` over the simplex restricted to the
/// neighbour set of each row.
pub fn init_view_affinity<T: Scalar>(
    support: Arc<NeighborSets<T>>,
    mode: LambdaMode<T>,
    view_id: usize,
) -> Result<InitialAffinity<T>> {
    let n = support.n();
    let k = support.k();
    let mut values = Array2::<T>::zeros((n, k));
    let mut row_lambdas = vec![T::zero(); n];

    match mode {
        LambdaMode::Fixed(lambda) => {
            if !(lambda > T::zero()) || !lambda.is_finite() {
                return Err(Error::Config(format!(
                    "lambda must be positive, got {lambda}"
                )));
            }
            row_lambdas.fill(lambda);
            let two_lambda = lambda + lambda;
            values
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each_init(
                    || (vec![T::zero(); k], Vec::with_capacity(k)),
                    |(target, scratch), (i, mut row)| {
                        for (t, &d) in target.iter_mut().zip(support.distances(i)) {
                            *t = -d / two_lambda;
                        }
                        let out = row.as_slice_mut().expect("standard layout");
                        project_to_simplex_into(target, out, scratch);
                    },
                );
        }
        LambdaMode::Auto | LambdaMode::AutoPerRow => {
            let kk = T::from_usize_lossy(k);
            values
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(row_lambdas.par_iter_mut())
                .enumerate()
                .for_each(|(i, (mut row, lam))| {
                    let dists = support.distances(i);
                    let boundary = support.boundary_distance(i);
                    let denom = kk * boundary - dists.iter().copied().sum::<T>();
                    *lam = (denom * T::lit(0.5)).max(T::lit(LAMBDA_FLOOR));
                    if denom <= T::epsilon() * kk * boundary.max(T::min_positive_value()) {
                        // every neighbour as far as the boundary sample
                        row.fill(T::one() / kk);
                    } else {
                        for (s, &d) in row.iter_mut().zip(dists) {
                            *s = (boundary - d) / denom;
                        }
                    }
                });
        }
    }

    Ok(InitialAffinity {
        affinity: ViewAffinity {
            view_id,
            support,
            values,
        },
        row_lambdas,
    })
}

/// Re-fits one view graph against the consensus graph:
/// `min_s Σ_j d_ij s_j + λ_i‖s‖² + w‖s − S*_i‖²` over the simplex on the
/// neighbour support, where `w` is the view's powered weight.
pub fn update_view_affinity<T: Scalar>(
    support: &Arc<NeighborSets<T>>,
    s_star: ArrayView2<T>,
    fusion_weight: T,
    lambda: RowLambda<'_, T>,
    view_id: usize,
) -> Result<ViewAffinity<T>> {
    let n = support.n();
    let k = support.k();
    if s_star.nrows() != n || s_star.ncols() != n {
        return Err(Error::Dimension(format!(
            "consensus graph is {}x{}, view has {n} samples",
            s_star.nrows(),
            s_star.ncols()
        )));
    }
    if !(fusion_weight >= T::zero()) {
        return Err(Error::Config(format!(
            "fusion weight must be nonnegative, got {fusion_weight}"
        )));
    }
    for i in 0..n {
        let lam = lambda.at(i);
        if !(lam >= T::zero()) || lam + fusion_weight <= T::zero() {
            return Err(Error::Config(format!(
                "row {i}: lambda + view weight must be positive (lambda = {lam}, weight = {fusion_weight})"
            )));
        }
        if matches!(lambda, RowLambda::Global(_)) {
            break;
        }
    }

    let two = T::lit(2.0);
    let mut values = Array2::<T>::zeros((n, k));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each_init(
            || (vec![T::zero(); k], Vec::with_capacity(k)),
            |(target, scratch), (i, mut row)| {
                let denom = two * (lambda.at(i) + fusion_weight);
                let srow = s_star.row(i);
                for ((t, &d), &j) in target
                    .iter_mut()
                    .zip(support.distances(i))
                    .zip(support.neighbors(i))
                {
                    *t = (two * fusion_weight * srow[j] - d) / denom;
                }
                let out = row.as_slice_mut().expect("standard layout");
                project_to_simplex_into(target, out, scratch);
            },
        );

    Ok(ViewAffinity {
        view_id,
        support: Arc::clone(support),
        values,
    })
}

/// Value of the row subproblem solved by [`update_view_affinity`], over the
/// support only (terms outside the support are constant in `s`).
pub fn view_row_objective<T: Scalar>(
    distances: &[T],
    s: &[T],
    s_star_on_support: &[T],
    lambda: T,
    fusion_weight: T,
) -> T {
    distances
        .iter()
        .zip(s)
        .zip(s_star_on_support)
        .map(|((&d, &x), &y)| d * x + lambda * x * x + fusion_weight * (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{knn_sets, pairwise_distances, DistanceMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds neighbour sets where row 0 sees the given neighbour and
    /// boundary distances, all other rows being filler.
    fn support_from_row(neigh: &[f64], boundary: f64) -> Arc<NeighborSets<f64>> {
        let k = neigh.len();
        let n = k + 2;
        let mut m = Array2::from_elem((n, n), boundary + 1.0);
        m.diag_mut().fill(0.0);
        for (j, &d) in neigh.iter().enumerate() {
            m[[0, j + 1]] = d;
            m[[j + 1, 0]] = d;
        }
        m[[0, n - 1]] = boundary;
        m[[n - 1, 0]] = boundary;
        Arc::new(knn_sets(&DistanceMatrix::from_array(m).unwrap(), k).unwrap())
    }

    fn bisect_projection(v: &[f64]) -> Vec<f64> {
        let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v.iter().map(|x| (x - mid).max(0.0)).sum::<f64>() > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        v.iter().map(|x| (x - tau).max(0.0)).collect()
    }

    fn pg_oracle(d: &[f64], y: &[f64], lambda: f64, w: f64) -> Vec<f64> {
        let k = d.len();
        let lip = 2.0 * (lambda + w);
        let step = 0.3 / lip;
        let mut s = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let grad: Vec<f64> = (0..k)
                .map(|j| d[j] + 2.0 * lambda * s[j] + 2.0 * w * (s[j] - y[j]))
                .collect();
            let next = bisect_projection(
                &s.iter()
                    .zip(&grad)
                    .map(|(a, g)| a - step * g)
                    .collect::<Vec<_>>(),
            );
            let delta = next
                .iter()
                .zip(&s)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            s = next;
            if delta < 1e-15 {
                break;
            }
        }
        s
    }

    #[test]
    fn auto_symmetric_row() {
        let sup = support_from_row(&[0.0, 0.0], 2.0);
        let init = init_view_affinity(sup, LambdaMode::Auto, 0).unwrap();
        let (_, vals) = init.affinity.row(0);
        assert_eq!(vals, &[0.5, 0.5]);
        assert_eq!(init.row_lambdas[0], 2.0);
    }

    #[test]
    fn auto_closed_form_two_neighbours() {
        let sup = support_from_row(&[1.0, 3.0], 5.0);
        let init = init_view_affinity(sup, LambdaMode::Auto, 0).unwrap();
        let (_, vals) = init.affinity.row(0);
        assert!((vals[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((vals[1] - 1.0 / 3.0).abs() < 1e-15);
        // λ = (2·5 − 4)/2 = 3; the QP oracle at that λ lands on the same row
        let oracle = pg_oracle(&[1.0, 3.0], &[0.0, 0.0], 3.0, 0.0);
        assert!((oracle[0] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_row_falls_back_to_uniform() {
        let sup = support_from_row(&[4.0, 4.0, 4.0], 4.0);
        let init = init_view_affinity(sup, LambdaMode::Auto, 0).unwrap();
        let (_, vals) = init.affinity.row(0);
        for &v in vals {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(init.row_lambdas[0], 1e-8);
    }

    #[test]
    fn fixed_lambda_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut neigh: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..3.0)).collect();
            neigh.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sup = support_from_row(&neigh, 3.5);
            let init = init_view_affinity(sup.clone(), LambdaMode::Fixed(1.0), 0).unwrap();
            let (_, vals) = init.affinity.row(0);
            let oracle = pg_oracle(sup.distances(0), &[0.0; 5], 1.0, 0.0);
            for (a, b) in vals.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_fixed_lambda() {
        let sup = support_from_row(&[1.0, 2.0], 3.0);
        assert!(matches!(
            init_view_affinity(sup, LambdaMode::Fixed(0.0), 0),
            Err(Error::Config(_))
        ));
    }

    fn random_setup(seed: u64, n: usize, k: usize) -> (Arc<NeighborSets<f64>>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let d = pairwise_distances(x.view(), false).unwrap();
        let sup = Arc::new(knn_sets(&d, k).unwrap());
        let mut s_star = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
        for mut row in s_star.rows_mut() {
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        (sup, s_star)
    }

    #[test]
    fn zero_weight_reduces_to_fixed_init() {
        let (sup, s_star) = random_setup(1, 12, 4);
        let upd =
            update_view_affinity(&sup, s_star.view(), 0.0, RowLambda::Global(0.8), 0).unwrap();
        let init = init_view_affinity(sup, LambdaMode::Fixed(0.8), 0).unwrap();
        assert_eq!(upd.weights(), init.affinity.weights());
    }

    #[test]
    fn dominant_fusion_term_tracks_consensus() {
        let n = 8;
        let sup = Arc::new(
            knn_sets(
                &DistanceMatrix::from_array(Array2::zeros((n, n))).unwrap(),
                3,
            )
            .unwrap(),
        );
        let (_, s_star) = random_setup(2, n, 3);
        let upd =
            update_view_affinity(&sup, s_star.view(), 1e9, RowLambda::Global(1.0), 0).unwrap();
        for i in 0..n {
            let (idx, vals) = upd.row(i);
            let y: Vec<f64> = idx.iter().map(|&j| s_star[[i, j]]).collect();
            let expect = crate::linalg::project_to_simplex(&y);
            for (a, b) in vals.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn update_matches_oracle() {
        let (sup, s_star) = random_setup(3, 30, 4);
        let upd =
            update_view_affinity(&sup, s_star.view(), 0.3, RowLambda::Global(0.7), 0).unwrap();
        for i in 0..30 {
            let (idx, vals) = upd.row(i);
            let y: Vec<f64> = idx.iter().map(|&j| s_star[[i, j]]).collect();
            let oracle = pg_oracle(sup.distances(i), &y, 0.7, 0.3);
            for (a, b) in vals.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invalid_weight_combination() {
        let (sup, s_star) = random_setup(4, 10, 3);
        assert!(matches!(
            update_view_affinity(&sup, s_star.view(), 0.0, RowLambda::Global(0.0), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fixed_point_under_self_consensus() {
        let (sup, _) = random_setup(5, 15, 4);
        let mut current = init_view_affinity(sup.clone(), LambdaMode::Auto, 0)
            .unwrap()
            .affinity;
        let mut gap = f64::INFINITY;
        for _ in 0..2000 {
            let dense = current.to_dense();
            let next =
                update_view_affinity(&sup, dense.view(), 0.5, RowLambda::Global(0.2), 0).unwrap();
            gap = (next.weights() - current.weights())
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            current = next;
            if gap < 1e-12 {
                break;
            }
        }
        let dense = current.to_dense();
        let again =
            update_view_affinity(&sup, dense.view(), 0.5, RowLambda::Global(0.2), 0).unwrap();
        let dist = (again.weights() - current.weights())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dist <= 1e-8, "gap {gap}, dist {dist}");
    }

    #[test]
    fn divergence_matches_dense() {
        let (sup, s_star) = random_setup(6, 14, 3);
        let view = init_view_affinity(sup, LambdaMode::Auto, 0)
            .unwrap()
            .affinity;
        let dense = view.to_dense();
        let expect: f64 = (&s_star - &dense).iter().map(|v| v * v).sum();
        assert!((view.divergence_from(s_star.view()) - expect).abs() < 1e-12);
    }

    #[test]
    fn from_parts_validates_rows() {
        let sup = support_from_row(&[1.0, 2.0], 3.0);
        let n = sup.n();
        let ok = Array2::from_elem((n, 2), 0.5);
        let g = ViewAffinity::from_parts(0, sup.clone(), ok).unwrap();
        assert_eq!(g.get(0, sup.neighbors(0)[1]), 0.5);
        let mut bad = Array2::from_elem((n, 2), 0.5);
        bad[[2, 0]] = 0.7;
        assert!(matches!(
            ViewAffinity::from_parts(0, sup.clone(), bad),
            Err(Error::Validation(_))
        ));
        let wrong = Array2::from_elem((n, 3), 1.0 / 3.0);
        assert!(matches!(
            ViewAffinity::from_parts(0, sup, wrong),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn rows_stay_on_support_and_simplex(seed in 0u64..500, w in 0.0f64..3.0, lam in 0.01f64..3.0) {
            let (sup, s_star) = random_setup(seed, 12, 4);
            let upd = update_view_affinity(&sup, s_star.view(), w, RowLambda::Global(lam), 0).unwrap();
            let dense = upd.to_dense();
            for i in 0..12 {
                prop_assert_eq!(dense[[i, i]], 0.0);
                prop_assert!((dense.row(i).sum() - 1.0).abs() < 1e-9);
                for j in 0..12 {
                    prop_assert!(dense[[i, j]] >= 0.0);
                    if !sup.contains(i, j) {
                        prop_assert_eq!(dense[[i, j]], 0.0);
                    }
                }
            }
        }

        #[test]
        fn row_objective_does_not_increase(seed in 0u64..500, w in 0.0f64..3.0, lam in 0.01f64..3.0) {
            let (sup, s_star) = random_setup(seed, 12, 4);
            let prev = init_view_affinity(sup.clone(), LambdaMode::Auto, 0).unwrap().affinity;
            let upd = update_view_affinity(&sup, s_star.view(), w, RowLambda::Global(lam), 0).unwrap();
            for i in 0..12 {
                let idx = sup.neighbors(i);
                let y: Vec<f64> = idx.iter().map(|&j| s_star[[i, j]]).collect();
                let before = view_row_objective(sup.distances(i), prev.row(i).1, &y, lam, w);
                let after = view_row_objective(sup.distances(i), upd.row(i).1, &y, lam, w);
                prop_assert!(after <= before + 1e-10);
            }
        }

        #[test]
        fn closer_neighbour_never_loses_weight(
            d in prop::collection::vec(0.0f64..5.0, 4),
            y in prop::collection::vec(0.0f64..1.0, 4),
            which in 0usize..4,
            shrink in 0.0f64..1.0,
        ) {
            let solve = |dist: &[f64]| {
                let target: Vec<f64> = dist.iter().zip(&y).map(|(&di, &yi)| (2.0 * 0.4 * yi - di) / (2.0 * (0.6 + 0.4))).collect();
                crate::linalg::project_to_simplex(&target)
            };
            let before = solve(&d);
            let mut moved = d.clone();
            moved[which] *= shrink;
            let after = solve(&moved);
            prop_assert!(after[which] >= before[which] - 1e-15);
        }
    }
}
