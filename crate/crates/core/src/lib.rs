//! Stream-based writer-independent handwritten signature verification.
//!
//! Signatures are handled as feature vectors. Pairs of vectors are mapped to
//! dissimilarity space, a writer-independent classifier separates same-writer
//! from different-writer dissimilarities, and a prequential stream loop keeps
//! an adaptive linear model up to date while a static kernel SVM serves as the
//! baseline.

pub mod cli;
pub mod config;
pub mod dissimilarity;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod featurestore;
pub mod linear_sgd;
pub mod preprocess;
pub mod rbf_svm;
pub mod rng;
pub mod stream;

pub use error::{Error, Result};
