//! Synthetic benchmark harness: structural-causal-model environments that
//! stand in for configurable systems, graded environment shifts, ground
//! truth, metrics, baseline optimizers, and the benchmark runner.

pub mod baselines;
pub mod bench;
pub mod env;
pub mod metrics;
pub mod plot;
pub mod shift;

pub use env::{build_env, build_env_from_json, Equation, Latent, ScmEnvironment, SimError, Term};
pub use metrics::{kl_divergence, relative_error};
pub use shift::{generate_shift, shift_env, Edit, Severity, ShiftSpec};
