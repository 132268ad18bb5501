//! Multi-view datasets and the synthetic blob generator.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::distance::check_finite;
use crate::scalar::Scalar;

/// `M` feature matrices describing the same `N` samples, row `i` of every
/// view being sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset<T> {
    pub name: String,
    pub views: Vec<Array2<T>>,
    pub labels: Option<Vec<usize>>,
}

impl<T: Scalar> MultiViewDataset<T> {
    pub fn new(
        name: impl Into<String>,
        views: Vec<Array2<T>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            views,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks that there is at least one view, that every view has the
    /// same number of rows and at least one column, that features are
    /// finite and that labels (if any) cover every sample.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .views
            .first()
            .ok_or_else(|| Error::Validation("dataset has no views".into()))?;
        let n = first.nrows();
        for (v, x) in self.views.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::Validation(format!(
                    "view {v} has {} rows, view 0 has {n}",
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(Error::Validation(format!("view {v} has no features")));
            }
            check_finite(x.view(), Some(v))?;
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.views.first().map_or(0, |x| x.nrows())
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Number of distinct ground-truth labels.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut u = l.clone();
            u.sort_unstable();
            u.dedup();
            u.len()
        })
    }

    pub fn view(&self, v: usize) -> ArrayView2<'_, T> {
        self.views[v].view()
    }

    /// Converts every feature to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MultiViewDataset<U> {
        MultiViewDataset {
            name: self.name.clone(),
            views: self
                .views
                .iter()
                .map(|x| x.mapv(|v| U::lit(v.as_f64())))
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Parameters of the synthetic Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_per_cluster: usize,
    pub clusters: usize,
    pub views: usize,
    /// Standard deviation of the isotropic noise around each centre.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: 100,
            clusters: 3,
            views: 3,
            noise: 0.2,
            seed: 0,
        }
    }
}

/// `views` noisy copies of `clusters` Gaussian blobs.
///
/// View `v` lives in `clusters + 1 + v` dimensions. Cluster centres are
/// the first `clusters` unit vectors, each view applies its own random
/// rotation, and samples are shuffled so labels are not sorted.
pub fn synth_blobs<T: Scalar>(spec: &BlobSpec) -> Result<MultiViewDataset<T>> {
    if spec.n_per_cluster == 0 || spec.clusters == 0 || spec.views == 0 {
        return Err(Error::Config(
            "cluster size, cluster count and view count must be positive".into(),
        ));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::Config(format!(
            "noise must be nonnegative, got {}",
            spec.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_per_cluster * spec.clusters;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let labels: Vec<usize> = order.iter().map(|&i| i / spec.n_per_cluster).collect();

    let views = (0..spec.views)
        .map(|v| {
            let dim = spec.clusters + 1 + v;
            let rot = random_rotation(dim, &mut rng);
            let mut x = Array2::<f64>::zeros((n, dim));
            for (row, &label) in labels.iter().enumerate() {
                let mut point = vec![0.0; dim];
                point[label] = 1.0;
                for p in point.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *p += spec.noise * z;
                }
                for a in 0..dim {
                    x[[row, a]] = (0..dim).map(|b| rot[[a, b]] * point[b]).sum();
                }
            }
            x.mapv(T::lit)
        })
        .collect();

    MultiViewDataset::new(
        format!(
            "blobs-c{}-n{}-m{}-s{}",
            spec.clusters, spec.n_per_cluster, spec.views, spec.seed
        ),
        views,
        Some(labels),
    )
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((dim, dim));
    let mut col = 0;
    while col < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for prev in 0..col {
            let dot: f64 = (0..dim).map(|a| q[[a, prev]] * v[a]).sum();
            for (a, x) in v.iter_mut().enumerate() {
                *x -= dot * q[[a, prev]];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (a, x) in v.iter().enumerate() {
            q[[a, col]] = x / norm;
        }
        col += 1;
    }
    q
}
