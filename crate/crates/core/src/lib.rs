//! Physics-informed neural network solvers for one-dimensional multiscale elliptic
//! problems, with exact assembly of the residual neural tangent kernel. The kernel feeds
//! the norm, spectrum and gradient-flow diagnostics; `spectral` tracks the Fourier content
//! of the training error.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod config;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod network;
pub mod ntk;
pub mod optim;
pub mod output;
pub mod pde;
pub mod spectral;

pub use activation::Activation;
pub use error::{Error, Result};
