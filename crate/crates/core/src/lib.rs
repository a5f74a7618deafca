//! Planar closed-curve registration: geodesic shooting of an outer-metric
//! LDDMM flow on a moving triangular mesh discretised with the Wu-Xu H³
//! nonconforming element, and ensemble Kalman inversion for the initial
//! momentum.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eki;
pub mod element;
pub mod error;
pub mod fem;
pub mod forward;
pub mod mesh;
pub mod momentum;
pub mod pipeline;
pub mod poly;
pub mod quadrature;
pub mod raster;

pub use error::{Error, Result};
