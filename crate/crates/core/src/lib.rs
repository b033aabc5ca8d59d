//! Path-based feature attribution with latent-guided integration paths.
//!
//! The crate bundles a small reverse-mode autodiff kernel, MLP classifiers and
//! autoencoders, analytic manifolds used as geometric ground truth, the path
//! attribution methods (G×I, IG, guided IG, latent-interpolation IG and the
//! latent-guided variant) and the perturbation metrics used to compare them.

pub mod attribution;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod manifold;
pub mod metrics;
pub mod models;
pub mod tensor;

pub use attribution::{
    attribute, AttributionMap, AttributionRequest, Interpolation, Method, PathParams, PathTrace,
    Target,
};
pub use autodiff::{DifferentiableFunction, EvalTape};
pub use data::Dataset;
pub use error::{Error, Result};
pub use manifold::AnalyticManifold;
pub use models::{Autoencoder, MlpSpec, Sequential, TrainConfig};
pub use tensor::Tensor;
