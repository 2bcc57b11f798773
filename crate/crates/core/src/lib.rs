//! Kernel nonnegative matrix factorization with factor matrices living in the
//! input space, applied to hyperspectral unmixing.
//!
//! A hyperspectral cube `X` (bands x pixels) is approximated in a reproducing
//! kernel Hilbert space by `Phi(x_t) ~ sum_n a_nt Phi(e_n)`, where the
//! endmember spectra `e_n` are estimated directly in the input space. No
//! pre-image step is ever needed: every quantity the solvers touch is
//! expressed through kernel evaluations.
//!
//! The crate provides:
//!
//! - [`kernels`]: linear, polynomial and Gaussian kernels with analytic
//!   gradients and Gram-matrix assembly;
//! - [`factorization`]: the alternating solvers (additive gradient descent
//!   and multiplicative updates), cost and gradients, and the iteration
//!   driver [`factorization::run`];
//! - [`regularizers`]: smoothness, fluctuation, weighted-average, sparsity
//!   and spatial penalties with their update-rule contributions;
//! - [`metrics`]: reconstruction errors in input and feature space, and
//!   spectral-angle matching against ground truth;
//! - [`diagnostics`]: finite-difference gradient checking and a probe for
//!   nonconvexity of the endmember subproblem;
//! - [`dataio`]: cube/matrix file formats, synthetic scene generation and
//!   run reports.

pub mod dataio;
pub mod diagnostics;
pub mod error;
pub mod factorization;
pub mod kernels;
pub mod matrix;
pub mod metrics;
pub mod regularizers;
pub mod rng;

pub use error::{Error, Result};
pub use factorization::{
    Abundances, Endmembers, HyperCube, InitScheme, RunResult, SolverConfig, UpdateScheme,
};
pub use kernels::KernelSpec;
pub use matrix::Mat;
pub use regularizers::RegularizerSet;
