//! Building blocks for OTDOA positioning experiments in sample-rate-limited
//! NB-IoT networks.
//!
//! The crate covers the full experiment loop: hexagonal network geometry,
//! TOA measurement with grid quantization and empirical channel errors,
//! Gauss-Newton hyperbolic multilateration, a small feedforward regressor
//! trained from scratch, dataset assembly, and Monte Carlo error evaluation.
//!
//! The numeric machinery is generic over the [`Scalar`] floating-point type;
//! the aliases below fix `f64`, which is what the experiment harness uses.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod mlp;
pub mod rng;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instances used by the CLI and the experiments.
pub type Point2d = geometry::Point2<f64>;
pub type BsLayoutD = geometry::BsLayout<f64>;
pub type MeasurementSetD = channel::MeasurementSet<f64>;
pub type SolverOptionsD = solver::SolverOptions<f64>;
pub type SolveResultD = solver::SolveResult<f64>;
pub type MlpParamsD = mlp::MlpParams<f64>;
pub type TrainConfigD = mlp::TrainConfig<f64>;
pub type SampleD = dataset::Sample<f64>;
pub type DatasetD = dataset::Dataset<f64>;
pub type GeneratorConfigD = dataset::GeneratorConfig<f64>;
pub type ErrorCdfD = eval::ErrorCdf<f64>;
pub type ComparisonConfigD = eval::ComparisonConfig<f64>;
