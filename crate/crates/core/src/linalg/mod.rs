//! Dense numeric kernels shared by every stage of the pipeline.

pub(crate) mod distance;
mod eigen;
mod knn;
mod laplacian;
mod simplex;

pub use distance::{pairwise_distances, standardize_columns, DistanceMatrix};
pub use eigen::{
    smallest_eigenpairs, smallest_eigenpairs_with, EigenMethod, EigenOptions, EigenPairs,
};
pub use knn::{knn_sets, NeighborSets};
pub use laplacian::{laplacian, laplacian_unchecked};
pub use simplex::{project_to_simplex, project_to_simplex_into};

pub(crate) use eigen::smallest_eigenpairs_and_next;
#[cfg(test)]
pub(crate) use eigen::symmetric_eigen_dense;
