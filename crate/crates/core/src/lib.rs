//! Optimal graphical multiple-testing procedures.
//!
//! This crate finds the graphical procedure (initial alpha allocation plus
//! transition matrix) that maximizes a weighted Monte Carlo estimate of
//! adjusted power for a clinical-trial scenario. It contains:
//!
//! - [`graph`]: the graph representation `g = (alphas, transitions)`, its
//!   feasibility rules, and standard constructions (Holm, fixed sequence);
//! - [`procedure`]: the sequentially rejective test, hypothesis removal, and
//!   an exhaustive closed-testing oracle used for verification;
//! - [`sim`]: trial scenarios, multivariate-normal p-value panels, and the
//!   high-accuracy normal distribution routines behind them;
//! - [`objective`]: decision matrices, weighted (optionally gated) empirical
//!   objectives, and familywise-error estimates;
//! - [`space`]: free-parameter families over graphs, their affine constraint
//!   systems, encode/decode, and uniform simplex sampling;
//! - [`fnn`]: the sigmoid feedforward surrogate, RMSProp training, and k-fold
//!   cross-validation for structure selection;
//! - [`opt`]: the augmented-Lagrangian optimizer, a derivative-free local
//!   refiner, a stochastic-ranking evolution strategy, and the brute-force
//!   dataset baseline;
//! - [`pipeline`]: the resumable end-to-end pipeline and report generation.
//!
//! All randomness flows through explicitly seeded ChaCha streams (see
//! [`rng`]), so every result in the crate is reproducible bit-for-bit across
//! runs, platforms, and worker counts.

#![forbid(unsafe_code)]

pub mod error;
pub mod fnn;
pub mod graph;
pub mod normal;
pub mod objective;
pub mod opt;
pub mod pipeline;
pub mod procedure;
pub mod rng;
pub mod sim;
pub mod space;

pub use error::{Error, Result};
pub use fnn::{cross_validate, train, CvReport, Dataset, Network, NetworkSpec, TrainConfig};
pub use graph::{fixed_sequence_graph, holm_graph, validate_graph, Graph, ValidationReport};
pub use objective::{
    decide_all, empirical_objective, empirical_objective_with_se, fwer_estimate,
    objective_value_on_panel, objective_with_se_on_panel, DecisionMatrix, ObjectiveSpec,
    WeightVector,
};
pub use opt::{
    augmented_lagrangian, brute_force_baseline, isres_baseline, local_refine, ALConfig,
    IsresBudget, IsresConfig, ObjectiveFn, OptProblem, OptResult, RefineConfig, WithGradient,
};
pub use pipeline::{
    compare_methods, evaluate_graph, run_pipeline, MethodRow, PipelineContext, Report, RunConfig,
};
pub use procedure::{closure_holm_oracle, remove_hypothesis, run_procedure, DecisionVector};
pub use sim::{power_to_mean, sample_pvalues, Correlation, PValuePanel, Scenario};
pub use space::{
    build_space, constraint_values, decode, encode, sample_uniform, ConstraintSet, FamilyConfig,
    ParamSpace,
};
