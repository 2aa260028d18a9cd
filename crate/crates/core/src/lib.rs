//! Lifting-based adaptive graph wavelet filters: diffusion wavelets,
//! attention-parameterized lifting, soft-threshold filtering, and the small
//! training stack needed to fit them for node and graph classification.

pub mod error;
pub mod matrix;
pub mod eigen;
pub mod graph;
pub mod spectral;
pub mod lifting;
pub mod autodiff;
pub mod optim;
pub mod filter;
pub mod container;
pub mod datasets;
pub mod preprocess;
pub mod model;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use graph::Graph;
pub use matrix::{CsrMatrix, SymmetricMatrix};
