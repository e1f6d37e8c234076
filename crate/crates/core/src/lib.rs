//! Spectrogram classification with class activation maps.
//!
//! The crate is organised as a pipeline: [`signal`] turns audio into
//! spectrogram images, [`corpus`] produces labelled clips (synthetic or
//! extracted from aligned recordings), [`nn`] trains a small residual CNN
//! ending in global average pooling and a linear head, [`cam`] explains its
//! predictions, and [`eval`] scores it.

pub mod cam;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grid;
pub mod kv;
pub mod nn;
pub mod signal;

pub use error::{Error, Result};
pub use grid::Grid;
