//! Screening and metamodeling for computer experiments whose outputs are
//! discretized curves.

pub mod cluster;
pub mod data;
pub mod doe;
pub mod error;
pub mod fpca;
pub mod geometry;
pub mod gsi;
pub mod metamodel;
pub mod rml;
pub mod rng;
pub mod validation;

pub use cluster::{Clustering, NeighborGraph};
pub use data::{center_and_inertia, CenteredEnsemble, Coding, CurveEnsemble, DesignMatrix};
pub use error::{Error, Result};
pub use fpca::PcaDecomposition;
