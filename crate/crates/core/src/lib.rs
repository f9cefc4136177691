//! Wearable physiological signals to recurrence plot, Gramian angular field
//! and Markov transition field images, multimodal image datasets, frozen
//! feature extraction with PCA, and per-user awareness classifiers with their
//! evaluation protocol.
//!
//! The numeric core (encoders, embedding, classifier) is generic over
//! [`Scalar`] (`f32` or `f64`). Signal I/O and preprocessing run in `f64`.
//! The aliases below fix the scalar to [`Real`].

pub mod classifier;
pub mod dataset;
pub mod embedding;
pub mod encoders;
mod error;
pub mod evaluation;
pub mod pipeline;
mod scalar;
pub mod signals;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type.
pub type Real = f64;

pub type Matrix = encoders::SquareMatrix<Real>;
pub type Encoded = encoders::EncodedWindow<Real>;
pub type Mlp = classifier::MlpModel<Real>;
pub type Pca = embedding::PcaModel<Real>;
pub type Model = classifier::TrainedModel<Real>;
pub type Builtin = embedding::BuiltinExtractor<Real>;
pub type Features = pipeline::UserFeatures<Real>;
pub type Record = embedding::FeatureRecord<Real>;
