//! Exact posterior inference for discrete Bayesian networks.
//!
//! The main engine is Value Elimination: depth-first backtracking search that
//! caches reusable partial sums ("factors"), learns nogoods from zero CPT
//! entries, and propagates forced values by forward checking. Variable
//! Elimination and exhaustive enumeration are provided alongside it as
//! baselines and as correctness oracles.

pub mod cache;
pub mod cli;
pub mod engine;
pub mod model;
pub mod netio;
pub mod oracle;
pub mod propagate;
pub mod varelim;
pub mod workload;

pub use cache::{Factor, FactorCache, Nogood, NogoodStore};
pub use engine::{run_query, EngineConfig, EngineError, Mode, Ordering, RunOutcome};
pub use model::{Assignment, BayesNet, Cpt, Posterior, Query, VarId, Variable};
pub use netio::ResultRecord;
