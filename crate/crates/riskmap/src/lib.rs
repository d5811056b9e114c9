//! Bayesian disease mapping for areal count data.
//!
//! The crate fits Poisson models for observed and expected counts over a
//! set of regions: a non-spatial log-linear model, a convolution model
//! with structured and unstructured region effects on an adjacency graph,
//! and a spatio-temporal extension with a linear period trend. Inference
//! runs Metropolis-within-Gibbs chains; [`diagnostics`] summarizes the
//! draws, checks convergence, and compares fits by DIC.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases at the crate root pick double precision.

pub mod contiguity;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod sim;
pub mod scalar;

pub use contiguity::{build_graph_from_polygons, ContiguityRule, PolygonFeature};
pub use diagnostics::{DicReport, NodeSelector, PosteriorSummaryRow, RiskSummary};
pub use error::{Error, Result};
pub use graph::{AdjacencyGraph, Region};
pub use io::archive::RunArchive;
pub use io::choropleth::ClassBreaks;
pub use io::config::RunConfig;
pub use io::dataset::DatasetSchema;
pub use mcmc::{ChainSet, McmcConfig};
pub use model::{Dataset, GammaParams, ModelSpec, ModelTier, ObsRow, Params};
pub use scalar::Scalar;

/// Double-precision adjacency graph.
pub type Graph64 = AdjacencyGraph<f64>;
/// Double-precision dataset.
pub type Dataset64 = Dataset<f64>;
/// Double-precision model specification.
pub type ModelSpec64 = ModelSpec<f64>;
/// Double-precision parameter state.
pub type Params64 = Params<f64>;
/// Double-precision chain output.
pub type ChainSet64 = ChainSet<f64>;
/// Double-precision sampler configuration.
pub type McmcConfig64 = McmcConfig<f64>;
