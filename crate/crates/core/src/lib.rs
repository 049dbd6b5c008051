//! Two-qubit parameterized attention scoring.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line tools.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod data;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod nn;
pub mod qpa;
pub mod quantum;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type QpaParamsF64 = qpa::QpaParams<f64>;
pub type QpaParamsF32 = qpa::QpaParams<f32>;
pub type ScoreKernelF64 = qpa::ScoreKernel<f64>;
pub type MatrixF64 = tensor::Matrix<f64>;
pub type VitModelF64 = nn::VitModel<f64>;
pub type VitModelF32 = nn::VitModel<f32>;
pub type DatasetF64 = data::ImageDataset<f64>;
