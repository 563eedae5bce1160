//! Numerical kernel: least squares, sample moments, and distribution functions.

pub mod dist;
pub mod linalg;
pub mod moments;
pub mod ols;

pub use dist::{normal_cdf, normal_quantile, t_cdf, t_quantile};
pub use linalg::Matrix;
pub use moments::{mean, sample_covariance, sample_covariance_matrix, sample_variance};
pub use ols::{ols_fit, OlsFit};
