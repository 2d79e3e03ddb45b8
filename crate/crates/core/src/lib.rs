//! Core library of the NEUS basis-asset pipeline: news corpus handling,
//! paragraph-vector company embeddings, UMAP projection, minimax prototype
//! clustering, sparse factor selection and the evaluation statistics.

pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod factor_model;
pub mod format;
pub mod projection;
pub mod regression;
pub mod rng;
pub mod shared;
pub mod stats;

pub use error::{Error, Result};
