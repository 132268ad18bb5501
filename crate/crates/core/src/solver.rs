//! Alternating minimisation driver.
//!
//! One outer iteration refits every view graph against the current
//! consensus graph (refreshing the view weights after each one), then
//! refits the consensus graph, then its spectral embedding. Each step
//! solves its block exactly, so with β held fixed the objective never
//! increases.

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusters::{default_threshold, extract_components};
use crate::consensus::{
    adapt_beta, embedding_distances, trace_form, update_consensus, zero_tolerance, ConsensusGraph,
};
use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::distance::pairwise_distances_for_view;
use crate::linalg::{knn_sets, laplacian_unchecked, EigenOptions};
use crate::scalar::Scalar;
use crate::view_graph::{
    init_view_affinity, update_view_affinity, LambdaMode, RowLambda, ViewAffinity,
};
use crate::weights::{update_weights, ViewWeights};

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    pub k_neighbors: usize,
    pub n_clusters: usize,
    pub lambda_mode: LambdaMode<T>,
    pub r: T,
    pub beta_init: T,
    pub beta_adaptive: bool,
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: T,
    pub seed: u64,
    pub standardize: bool,
    pub eigen: EigenOptions,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(k_neighbors: usize, n_clusters: usize) -> Self {
        Self {
            k_neighbors,
            n_clusters,
            lambda_mode: LambdaMode::Auto,
            r: T::lit(2.0),
            beta_init: T::one(),
            beta_adaptive: true,
            max_iters: 50,
            tol: T::lit(1e-6),
            seed: 0,
            standardize: true,
            eigen: EigenOptions::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_neighbors < 1 || self.k_neighbors + 2 > n {
            return Err(Error::Config(format!(
                "k = {} out of range [1, {}] for {n} samples",
                self.k_neighbors,
                n.saturating_sub(2)
            )));
        }
        if self.n_clusters < 2 || self.n_clusters > n {
            return Err(Error::Config(format!(
                "cluster count {} out of range [2, {n}]",
                self.n_clusters
            )));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.r > T::one()) || !self.r.is_finite() {
            return Err(Error::Config(format!(
                "r must be greater than 1, got {}",
                self.r
            )));
        }
        if !(self.beta_init > T::zero()) || !self.beta_init.is_finite() {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta_init
            )));
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(Error::Config(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// The ridge weights actually used on the view graphs.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularization<T> {
    Global(T),
    /// One value per row, per view.
    PerRow(Vec<Vec<T>>),
}

impl<T: Scalar> Regularization<T> {
    pub fn for_view(&self, v: usize) -> RowLambda<'_, T> {
        match self {
            Regularization::Global(l) => RowLambda::Global(*l),
            Regularization::PerRow(rows) => RowLambda::PerRow(&rows[v]),
        }
    }

    pub fn global(&self) -> Option<T> {
        match self {
            Regularization::Global(l) => Some(*l),
            Regularization::PerRow(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub objective: T,
    /// `Σ_v w_v^r ‖S* − S^v‖²_F`.
    pub fusion_residual: T,
    /// Sum of the `c` smallest Laplacian eigenvalues.
    pub eig_sum: T,
    pub components: usize,
    /// β used during this iteration.
    pub beta: T,
    pub weights: Vec<T>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace<T> {
    /// Objective after initialisation, evaluated with the initial β.
    pub initial_objective: T,
    pub records: Vec<IterationRecord<T>>,
    pub converged: bool,
    pub iterations_run: usize,
    pub init_elapsed: Duration,
}

impl<T: Scalar> SolverTrace<T> {
    /// Consecutive iteration pairs run with the same β whose objective went
    /// up by more than `rel_tol` relative to the earlier value.
    pub fn monotonicity_violations(&self, rel_tol: T) -> Vec<usize> {
        self.records
            .windows(2)
            .filter(|w| w[0].beta == w[1].beta)
            .filter(|w| {
                w[1].objective > w[0].objective + rel_tol * w[0].objective.abs().max(T::one())
            })
            .map(|w| w[1].iter)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub graph: ConsensusGraph<T>,
    pub weights: ViewWeights<T>,
    pub views: Vec<ViewAffinity<T>>,
    pub trace: SolverTrace<T>,
    pub regularization: Regularization<T>,
}

/// Full objective
/// `Σ_v Σ_ij d^v_ij S^v_ij + Σ_v Σ_i λ_i ‖S^v_i‖² + Σ_v w_v^r ‖S* − S^v‖²_F
///  + β Σ_ij S*_ij ‖f_i − f_j‖²`.
///
/// The last term is the pairwise form of the spectral penalty and equals
/// `2β tr(Fᵀ L* F)`; it is exactly the term the consensus row update
/// minimises, which is what makes the iteration monotone.
pub fn objective<T: Scalar>(
    views: &[ViewAffinity<T>],
    s_star: ArrayView2<T>,
    weights: &ViewWeights<T>,
    embedding: ArrayView2<T>,
    regularization: &Regularization<T>,
    beta: T,
) -> Result<T> {
    let n = s_star.nrows();
    if s_star.ncols() != n || embedding.nrows() != n {
        return Err(Error::Dimension(format!(
            "S* is {}x{}, embedding has {} rows",
            n,
            s_star.ncols(),
            embedding.nrows()
        )));
    }
    if views.len() != weights.len() || views.iter().any(|v| v.n() != n) {
        return Err(Error::Dimension(
            "view graphs, weights and consensus graph disagree".into(),
        ));
    }
    if let Regularization::PerRow(rows) = regularization {
        if rows.len() != views.len() || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(
                "per-row lambda table has the wrong shape".into(),
            ));
        }
    }
    let local: T = views
        .iter()
        .enumerate()
        .map(|(v, g)| g.distance_cost() + g.ridge_cost(regularization.for_view(v)))
        .sum();
    let fusion = fusion_residual(views, s_star, weights);
    let l = laplacian_unchecked(s_star);
    let spectral = T::lit(2.0) * beta * trace_form(&l, &embedding.to_owned());
    Ok(local + fusion + spectral)
}

fn fusion_residual<T: Scalar>(
    views: &[ViewAffinity<T>],
    s_star: ArrayView2<T>,
    weights: &ViewWeights<T>,
) -> T {
    views
        .iter()
        .zip(weights.powered())
        .map(|(g, p)| p * g.divergence_from(s_star))
        .sum()
}

/// Runs the alternating minimisation on a dataset.
pub fn fit<T: Scalar>(
    dataset: &MultiViewDataset<T>,
    config: &SolverConfig<T>,
) -> Result<FitResult<T>> {
    dataset.validate()?;
    let n = dataset.n_samples();
    config.validate(n)?;
    let c = config.n_clusters;
    let m = dataset.n_views();
    let started = Instant::now();

    // per-view distances, neighbour sets and initial graphs; the dense
    // distance matrix is dropped once the neighbour sets hold what is needed
    let inits = (0..m)
        .into_par_iter()
        .map(|v| {
            let d = pairwise_distances_for_view(dataset.view(v), config.standardize, Some(v))?;
            let support = Arc::new(knn_sets(&d, config.k_neighbors)?);
            init_view_affinity(support, config.lambda_mode, v)
        })
        .collect::<Result<Vec<_>>>()?;

    let regularization = match config.lambda_mode {
        LambdaMode::Fixed(l) => Regularization::Global(l),
        LambdaMode::Auto => {
            let count = T::from_usize_lossy(n * m);
            let total: T = inits
                .iter()
                .flat_map(|i| i.row_lambdas.iter().copied())
                .sum();
            Regularization::Global(total / count)
        }
        LambdaMode::AutoPerRow => {
            Regularization::PerRow(inits.iter().map(|i| i.row_lambdas.clone()).collect())
        }
    };
    let mut views: Vec<ViewAffinity<T>> = inits.into_iter().map(|i| i.affinity).collect();
    let mut weights = ViewWeights::uniform(m, config.r)?;

    let zeros = Array2::<T>::zeros((n, n));
    let s_star = update_consensus(&views, &weights, zeros.view(), T::zero())?;
    drop(zeros);
    let mut beta = config.beta_init;
    let mut graph = ConsensusGraph::from_affinity(s_star, c, beta, &config.eigen, None)?;
    let initial_objective = objective(
        &views,
        graph.s_star.view(),
        &weights,
        graph.embedding.view(),
        &regularization,
        beta,
    )?;
    let init_elapsed = started.elapsed();
    log::debug!(
        "initialised {m} views of {n} samples in {init_elapsed:?}, objective {initial_objective:e}"
    );

    let mut previous = initial_objective;
    let mut records = Vec::new();
    let mut converged = false;

    for iter in 1..=config.max_iters {
        let t0 = Instant::now();

        let mut divergences: Vec<T> = views
            .iter()
            .map(|g| g.divergence_from(graph.s_star.view()))
            .collect();
        for v in 0..m {
            let coeff = weights.powered()[v];
            views[v] = update_view_affinity(
                views[v].support(),
                graph.s_star.view(),
                coeff,
                regularization.for_view(v),
                v,
            )?;
            divergences[v] = views[v].divergence_from(graph.s_star.view());
            weights = update_weights(&divergences, config.r)?;
        }

        let e = embedding_distances(graph.embedding.view());
        let s_star = update_consensus(&views, &weights, e.view(), beta)?;
        drop(e);
        graph = ConsensusGraph::from_affinity(
            s_star,
            c,
            beta,
            &config.eigen,
            Some(graph.embedding.view()),
        )?;

        let obj = objective(
            &views,
            graph.s_star.view(),
            &weights,
            graph.embedding.view(),
            &regularization,
            beta,
        )?;
        let fusion = fusion_residual(&views, graph.s_star.view(), &weights);
        let eig_sum: T = graph.eigenvalues().iter().copied().sum();
        let threshold = default_threshold(graph.s_star.view());
        let components = extract_components(graph.s_star.view(), threshold).1;

        let next_beta = if config.beta_adaptive {
            let spectrum = graph.spectrum().to_vec();
            adapt_beta(&spectrum, c, beta, zero_tolerance(&graph.laplacian))
        } else {
            beta
        };

        let change = (obj - previous).abs() / previous.abs().max(T::min_positive_value());
        records.push(IterationRecord {
            iter,
            objective: obj,
            fusion_residual: fusion,
            eig_sum,
            components,
            beta,
            weights: weights.as_slice().to_vec(),
            elapsed: t0.elapsed(),
        });
        log::debug!(
            "iter {iter}: objective {obj:e} (rel change {change:e}), components {components}, beta {beta:e}"
        );

        converged = change <= config.tol
            && (!config.beta_adaptive || (components == c && next_beta == beta));
        beta = next_beta;
        graph.beta = beta;
        previous = obj;
        if converged {
            break;
        }
    }

    let iterations_run = records.len();
    Ok(FitResult {
        graph,
        weights,
        views,
        trace: SolverTrace {
            initial_objective,
            records,
            converged,
            iterations_run,
            init_elapsed,
        },
        regularization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, BlobSpec};
    use crate::linalg::laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_blobs(seed: u64, views: usize) -> MultiViewDataset<f64> {
        synth_blobs(&BlobSpec {
            n_per_cluster: 20,
            clusters: 3,
            views,
            noise: 0.15,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn objective_terms_against_dense_evaluation() {
        let ds = small_blobs(1, 2);
        let mut cfg = SolverConfig::new(5, 3);
        cfg.max_iters = 2;
        cfg.beta_adaptive = false;
        let fit = fit(&ds, &cfg).unwrap();
        let lam = fit.regularization.global().unwrap();
        let beta = 0.7;
        let got = objective(
            &fit.views,
            fit.graph.s_star().view(),
            &fit.weights,
            fit.graph.embedding().view(),
            &fit.regularization,
            beta,
        )
        .unwrap();

        // term-by-term on dense matrices
        let n = ds.n_samples();
        let mut expect = 0.0;
        for (v, g) in fit.views.iter().enumerate() {
            let d = crate::linalg::pairwise_distances(ds.view(v), true).unwrap();
            let s = g.to_dense();
            for i in 0..n {
                for j in 0..n {
                    expect += d.get(i, j) * s[[i, j]] + lam * s[[i, j]] * s[[i, j]];
                    let w = fit.weights.as_slice()[v].powf(2.0);
                    expect += w * (fit.graph.s_star()[[i, j]] - s[[i, j]]).powi(2);
                }
            }
        }
        let f = fit.graph.embedding();
        for i in 0..n {
            for j in 0..n {
                let e: f64 = (0..3).map(|k| (f[[i, k]] - f[[j, k]]).powi(2)).sum();
                expect += beta * fit.graph.s_star()[[i, j]] * e;
            }
        }
        assert!(
            (got - expect).abs() <= 1e-10 * expect.abs().max(1.0),
            "{got} vs {expect}"
        );
    }

    #[test]
    fn fusion_and_spectral_terms_vanish_for_single_consistent_view() {
        let ds = small_blobs(2, 1);
        let d = crate::linalg::pairwise_distances(ds.view(0), true).unwrap();
        let support = Arc::new(knn_sets(&d, 5).unwrap());
        let g = init_view_affinity(support, LambdaMode::Fixed(0.5), 0)
            .unwrap()
            .affinity;
        let s = g.to_dense();
        let n = ds.n_samples();
        let f = Array2::from_elem((n, 1), 1.0 / (n as f64).sqrt());
        let w = ViewWeights::uniform(1, 2.0).unwrap();
        let got = objective(
            std::slice::from_ref(&g),
            s.view(),
            &w,
            f.view(),
            &Regularization::Global(0.5),
            123.0,
        )
        .unwrap();
        let expect = g.distance_cost() + 0.5 * g.frobenius_sq();
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn zero_distances_zero_locality_term() {
        let n = 6;
        let d = crate::linalg::DistanceMatrix::from_array(Array2::<f64>::zeros((n, n))).unwrap();
        let support = Arc::new(knn_sets(&d, n - 2).unwrap());
        let g = init_view_affinity(support, LambdaMode::Auto, 0)
            .unwrap()
            .affinity;
        assert_eq!(g.distance_cost(), 0.0);
    }

    #[test]
    fn objective_rejects_mismatched_shapes() {
        let ds = small_blobs(3, 2);
        let mut cfg = SolverConfig::new(5, 3);
        cfg.max_iters = 1;
        let fit = fit(&ds, &cfg).unwrap();
        let wrong = Array2::<f64>::zeros((5, 5));
        assert!(matches!(
            objective(
                &fit.views,
                wrong.view(),
                &fit.weights,
                fit.graph.embedding().view(),
                &fit.regularization,
                1.0
            ),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn separated_blobs_become_components() {
        let ds = small_blobs(4, 3);
        let fit = fit(&ds, &SolverConfig::new(6, 3)).unwrap();
        assert!(fit.trace.converged);
        let (labels, count) = extract_components(
            fit.graph.s_star().view(),
            default_threshold(fit.graph.s_star().view()),
        );
        assert_eq!(count, 3);
        let truth = ds.labels.as_ref().unwrap();
        for i in 0..truth.len() {
            for j in 0..truth.len() {
                assert_eq!(labels[i] == labels[j], truth[i] == truth[j]);
            }
        }
    }

    #[test]
    fn far_apart_clouds_recovered() {
        // intra-cloud spread 100x smaller than inter-cloud distance
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..15 {
                rows.push(c[0] + rng.random_range(-0.5..0.5));
                rows.push(c[1] + rng.random_range(-0.5..0.5));
                truth.push(k);
            }
        }
        let x = Array2::from_shape_vec((45, 2), rows).unwrap();
        let ds = MultiViewDataset::new("clouds", vec![x.clone(), x], Some(truth.clone())).unwrap();
        let fit = fit(&ds, &SolverConfig::new(5, 3)).unwrap();
        let (labels, count) = extract_components(
            fit.graph.s_star().view(),
            default_threshold(fit.graph.s_star().view()),
        );
        assert_eq!(count, 3);
        for i in 0..45 {
            for j in 0..45 {
                assert_eq!(labels[i] == labels[j], truth[i] == truth[j]);
            }
        }
    }

    #[test]
    fn single_view_keeps_unit_weight() {
        let ds = small_blobs(6, 1);
        let fit = fit(&ds, &SolverConfig::new(5, 3)).unwrap();
        assert_eq!(fit.weights.as_slice(), &[1.0]);
        assert!(fit.trace.records.iter().all(|r| r.weights == vec![1.0]));
    }

    #[test]
    fn trace_contract() {
        for max_iters in [1, 3, 50] {
            let ds = small_blobs(7, 2);
            let mut cfg = SolverConfig::new(5, 3);
            cfg.max_iters = max_iters;
            let fit = fit(&ds, &cfg).unwrap();
            let t = &fit.trace;
            assert!(t.iterations_run <= max_iters);
            assert_eq!(t.iterations_run, t.records.len());
            assert!(t.records.iter().all(|r| r.objective.is_finite()));
            if t.converged {
                let last = t.records.last().unwrap();
                let prev = if t.records.len() > 1 {
                    t.records[t.records.len() - 2].objective
                } else {
                    t.initial_objective
                };
                assert!((last.objective - prev).abs() / prev.abs() <= cfg.tol);
                assert_eq!(last.components, 3);
            } else {
                assert_eq!(t.iterations_run, max_iters);
            }
            for r in &t.records {
                assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(r.weights.iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn fixed_beta_is_monotone() {
        for seed in 0..3 {
            let ds = small_blobs(10 + seed, 3);
            let mut cfg = SolverConfig::new(5, 3);
            cfg.beta_adaptive = false;
            cfg.beta_init = 0.5;
            cfg.max_iters = 25;
            cfg.tol = 1e-12;
            let fit = fit(&ds, &cfg).unwrap();
            assert!(fit.trace.monotonicity_violations(1e-8).is_empty());
            assert!(fit.trace.records[0].objective <= fit.trace.initial_objective * (1.0 + 1e-8));
        }
    }

    #[test]
    fn adaptive_run_monotone_between_beta_changes() {
        let ds = small_blobs(20, 3);
        let mut cfg = SolverConfig::new(5, 3);
        cfg.beta_init = 1e-3;
        let fit = fit(&ds, &cfg).unwrap();
        assert!(fit.trace.monotonicity_violations(1e-8).is_empty());
    }

    #[test]
    fn per_row_and_fixed_lambda_modes_run() {
        let ds = small_blobs(8, 2);
        for mode in [LambdaMode::AutoPerRow, LambdaMode::Fixed(0.3)] {
            let mut cfg = SolverConfig::new(5, 3);
            cfg.lambda_mode = mode;
            let fit = fit(&ds, &cfg).unwrap();
            assert!(fit.trace.iterations_run >= 1);
        }
    }

    #[test]
    fn invalid_configs() {
        let ds = small_blobs(9, 2);
        let n = ds.n_samples();
        type Mutation = Box<dyn Fn(&mut SolverConfig<f64>)>;
        let cases: Vec<Mutation> = vec![
            Box::new(|c| c.k_neighbors = 0),
            Box::new(move |c| c.k_neighbors = n - 1),
            Box::new(move |c| c.n_clusters = n + 1),
            Box::new(|c| c.n_clusters = 1),
            Box::new(|c| c.r = 1.0),
            Box::new(|c| c.tol = 0.0),
            Box::new(|c| c.max_iters = 0),
            Box::new(|c| c.lambda_mode = LambdaMode::Fixed(-1.0)),
        ];
        for mutate in cases {
            let mut cfg = SolverConfig::new(5, 3);
            mutate(&mut cfg);
            assert!(matches!(fit(&ds, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn nan_feature_rejected_before_compute() {
        let mut ds = small_blobs(9, 2);
        ds.views[1][[4, 2]] = f64::NAN;
        assert!(matches!(
            fit(&ds, &SolverConfig::new(5, 3)),
            Err(Error::NonFiniteFeature {
                view: Some(1),
                row: 4,
                col: 2
            })
        ));
    }

    #[test]
    fn converged_graph_has_zero_trace() {
        let ds = small_blobs(11, 3);
        let fit = fit(&ds, &SolverConfig::new(6, 3)).unwrap();
        assert!(fit.trace.converged);
        let l = laplacian(fit.graph.s_star().view()).unwrap();
        let tr = trace_form(&l, fit.graph.embedding());
        assert!(tr <= 1e-6);
        assert!(fit.graph.eigenvalues().sum() <= 1e-6);
    }

    #[test]
    fn single_precision_fit() {
        let ds: MultiViewDataset<f32> = small_blobs(12, 2).cast();
        let mut cfg = SolverConfig::<f32>::new(6, 3);
        cfg.tol = 1e-4;
        let fit = fit(&ds, &cfg).unwrap();
        let (labels, _) = extract_components(
            fit.graph.s_star().view(),
            default_threshold(fit.graph.s_star().view()),
        );
        let truth = ds.labels.as_ref().unwrap();
        let acc = crate::metrics::accuracy(truth, &labels).unwrap();
        assert!(acc > 0.95, "acc {acc}");
    }
}
