//! Causal transfer Bayesian optimization of configurable systems.
//!
//! The pipeline: learn a causal performance model from source-environment
//! measurements (constraint-based structure discovery), refine it by causal
//! effect ranking and Markov-blanket pruning, then drive a target-environment
//! search with two causal Gaussian processes (a warm one on the refined source
//! model, a cold one on the full space) combined through an indicator-gated
//! acquisition function, with an epsilon-greedy observe/intervene schedule.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`space`]: typed configuration spaces, validation, sampling, normalization
//! - [`data`]: measurement records, datasets, CSV persistence, repeat collapsing
//! - [`graph`]: mixed graphs (skeleton/PAG/ADMG), m-separation, graph diffing
//! - [`discovery`]: conditional-independence tests and the FCI-style pipeline
//! - [`effects`]: backdoor adjustment, do-estimates, effect ranking, blankets
//! - [`surrogate`]: causal Gaussian processes over exploration sets
//! - [`acquisition`]: expected improvement and the warm/cold combination rule
//! - [`hull`]: convex-hull volume of observed configurations
//! - [`optimizer`]: the budgeted observe/intervene loop and run persistence

pub mod acquisition;
pub mod data;
pub mod discovery;
pub mod effects;
pub mod graph;
pub mod hull;
pub mod optimizer;
pub mod space;
pub mod stats;
pub mod surrogate;

pub use data::{Dataset, MeasurementRecord, Provenance};
pub use graph::{Mark, MixedGraph, NodeRole, Stage};
pub use optimizer::{Evaluator, OptResult, Query, RunOptions};
pub use space::{Configuration, ConfigurationSpace, DomainKind, OptionDomain, Value};
