//! Backtracking inference: GenAndSum, Prob-BT and Value Elimination.
//!
//! All three modes share one search loop. They differ in where a finished
//! level's sum goes. GenAndSum and Prob-BT multiply it into the parent level.
//! Value Elimination caches it as a factor and multiplies it into the deepest
//! level its dependency set mentions.

mod search;
pub mod state;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cache::{CacheError, Factor, Nogood};
use crate::model::{remove_barren, Assignment, BayesNet, ModelError, Posterior, Query, Reduction, VarId};
use crate::propagate::preprocess;
use crate::varelim::min_fill_order;

pub use search::Search;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    GenAndSum,
    ProbBt,
    ValueElim,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GenAndSum => "gen-and-sum",
            Mode::ProbBt => "prob-bt",
            Mode::ValueElim => "value-elim",
        }
    }
}

/// Chooses among active variables at the current trail.
pub type Heuristic = fn(&BayesNet, &[VarId]) -> Option<VarId>;

#[derive(Debug, Clone)]
pub enum Ordering {
    /// Reverse of a min-fill elimination order of the non-query variables.
    MinFillReverse,
    /// Branch in this order (original variable ids); unlisted variables follow
    /// in id order.
    Static(Vec<VarId>),
    /// Deadends first, then forced variables, then the heuristic if any,
    /// otherwise the min-fill reverse order.
    Dynamic(Option<Heuristic>),
}

impl Ordering {
    pub fn name(&self) -> &'static str {
        match self {
            Ordering::MinFillReverse => "min-fill",
            Ordering::Static(_) => "static",
            Ordering::Dynamic(_) => "dynamic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    pub ordering: Ordering,
    /// Maximum number of cached factors; `None` is unbounded.
    pub cache_budget: Option<usize>,
    pub nogoods: bool,
    pub forward_checking: bool,
    pub barren_removal: bool,
    pub seed: u64,
    pub timeout: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Record factors, nogoods and skipped contexts in [`RunOutcome::trace`].
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::ValueElim,
            ordering: Ordering::MinFillReverse,
            cache_budget: None,
            nogoods: true,
            forward_checking: true,
            barren_removal: true,
            seed: 0,
            timeout: None,
            node_limit: None,
            trace: false,
        }
    }
}

impl EngineConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("static order names unknown variable {var}")]
    BadOrder { var: VarId },
    #[error("node limit of {limit} exceeded")]
    NodeLimit { limit: u64 },
    #[error("timed out after {elapsed:?}")]
    Timeout { elapsed: Duration },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    /// Assignments made during search.
    pub nodes: u64,
    pub cpt_evals: u64,
    pub factors_cached: u64,
    pub cache_hits: u64,
    pub nogoods: u64,
    pub backjumps: u64,
    pub purges: u64,
    pub wall: Duration,
}

/// A cached factor together with the variable whose level produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedFactor {
    pub var: VarId,
    pub factor: Factor,
}

/// Search internals for cross-checking, in reduced-network ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub factors: Vec<TracedFactor>,
    pub nogoods: Vec<Nogood>,
    /// Trails under which a value was skipped because its product was zero.
    pub skipped: Vec<Vec<Assignment>>,
    /// Trails extended by a value that forward checking pruned.
    pub pruned: Vec<Vec<Assignment>>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub posterior: Posterior,
    /// Unnormalized `Pr(Q=d ∧ E)`.
    pub masses: Vec<f64>,
    pub stats: Stats,
    /// The network and query the search actually ran on.
    pub reduction: Reduction,
    pub trace: Trace,
}

/// Branching order over the reduced network, query excluded.
pub(crate) fn static_order(
    net: &BayesNet,
    query: &Query,
    ordering: &Ordering,
    reduction: &Reduction,
) -> Result<Vec<VarId>, EngineError> {
    let mut order = match ordering {
        Ordering::Static(list) => {
            let mut seen = vec![false; net.len()];
            let mut order = Vec::new();
            for &old in list {
                let Some(slot) = reduction.old_to_new.get(old) else {
                    return Err(EngineError::BadOrder { var: old });
                };
                if let Some(v) = *slot {
                    if !std::mem::replace(&mut seen[v], true) {
                        order.push(v);
                    }
                }
            }
            order.extend((0..net.len()).filter(|&v| !seen[v]));
            order
        }
        Ordering::MinFillReverse | Ordering::Dynamic(_) => {
            let mut excluded: Vec<VarId> = query.evidence.iter().map(|a| a.var).collect();
            excluded.push(query.query_var);
            let mut pi = min_fill_order(net, &excluded);
            pi.reverse();
            pi
        }
    };
    order.retain(|&v| v != query.query_var && !query.is_evidence(v));
    Ok(order)
}

/// Computes the posterior of `query` on `net` with the configured mode.
pub fn run_query(net: &BayesNet, query: &Query, config: &EngineConfig) -> Result<RunOutcome, EngineError> {
    let start = Instant::now();
    query.check(net)?;
    let reduction = if config.barren_removal {
        remove_barren(net, query)
    } else {
        Reduction::identity(net, query)
    };
    let rnet = &reduction.net;
    let rquery = &reduction.query;
    let order = static_order(rnet, rquery, &config.ordering, &reduction)?;
    let card = rnet.card(rquery.query_var);

    let fc = config.forward_checking && config.mode != Mode::GenAndSum;
    let (masses, stats, trace) = match preprocess(rnet, rquery, fc) {
        Err(_) => (vec![0.0; card], Stats::default(), Trace::default()),
        Ok(pre) => {
            let mut search = Search::new(rnet, rquery, config, order, pre, start);
            let masses = search.run()?;
            let (stats, trace) = search.into_parts();
            (masses, stats, trace)
        }
    };
    let mut stats = stats;
    stats.wall = start.elapsed();
    Ok(RunOutcome {
        posterior: Posterior::from_masses(&masses),
        masses,
        stats,
        reduction,
        trace,
    })
}
