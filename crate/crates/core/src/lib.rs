//! Bayesian model selection and averaging over generated features with the
//! reversible genetically modified mode jumping MCMC sampler.
//!
//! The building blocks, bottom up:
//!
//! - [`feature`]: expression trees over covariates and their canonical keys.
//! - [`operators`]: populations and the mutation, crossover, modification,
//!   projection and filtration operators.
//! - [`evidence`], [`target`], [`archive`]: marginal likelihoods, priors and
//!   the cache of evaluated models.
//! - [`kernel`]: large jumps, local optimization and the randomization
//!   density.
//! - [`engine`]: the reversible kernel, its delayed-acceptance variant and
//!   the GMJMCMC baseline.
//! - [`estimate`], [`enumerate`]: posterior estimators and the exhaustive
//!   oracle.
//! - [`experiments`], [`runner`]: synthetic studies and the lane-parallel run
//!   driver behind the CLI.

pub mod archive;
pub mod data;
pub mod engine;
pub mod enumerate;
pub mod estimate;
pub mod evidence;
pub mod experiments;
pub mod feature;
pub mod kernel;
pub mod lanes;
pub mod numfmt;
pub mod operators;
pub mod runner;
pub mod target;

pub use archive::{Model, ModelArchive, ModelId};
pub use data::{Dataset, Family};
pub use engine::{Chain, KernelKind, SamplerConfig, StepRecord};
pub use estimate::{EstimatorKind, PosteriorEstimate};
pub use feature::{Feature, FeatureRef, Nonlinearity};
pub use kernel::{LocalKernelConfig, LocalMove, Mask, QrRatio};
pub use lanes::Execution;
pub use operators::{OperatorConfig, Population};
pub use target::Target;
