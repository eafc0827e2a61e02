//! Benchmark instances and random queries.
//!
//! Queries follow a "not obviously trivial" protocol. The net is first
//! forward-checked with no evidence. An evidence item is then drawn from the
//! unpruned values of an unforced variable and its consequences propagated.
//! Finally the query variable is drawn from what is still unforced.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::state::{CptTracker, Trail};
use crate::model::fixtures::{binary_chain, chains};
use crate::model::{Assignment, BayesNet, Query, VarId};
use crate::netio::random_network;
use crate::propagate::{propagate_to_fixpoint, Propagation, PruneMarks};

/// Evidence draws tried before accepting one that propagation refutes.
const EVIDENCE_ATTEMPTS: usize = 8;

struct Level0 {
    trail: Trail,
    tracker: CptTracker,
    marks: PruneMarks,
}

impl Level0 {
    fn new(net: &BayesNet) -> Option<Self> {
        let mut s = Self {
            trail: Trail::new(net.len()),
            tracker: CptTracker::new(net),
            marks: PruneMarks::new(&net.cards()),
        };
        let seeds: Vec<VarId> = (0..net.len()).collect();
        s.propagate(net, &seeds).then_some(s)
    }

    fn propagate(&mut self, net: &BayesNet, seeds: &[VarId]) -> bool {
        let r = propagate_to_fixpoint(net, &mut self.trail, &mut self.tracker, &mut self.marks, seeds, 0, None);
        matches!(r, Propagation::Consistent(_))
    }

    fn assign(&mut self, net: &BayesNet, a: Assignment) -> bool {
        self.trail.assign(a, 0);
        self.tracker.assign(a.var, |_, _| {});
        self.propagate(net, &[a.var])
    }

    fn unforced(&self, net: &BayesNet) -> Vec<VarId> {
        (0..net.len()).filter(|&v| !self.trail.is_assigned(v)).collect()
    }
}

/// Draws one evidence item and a query variable for `net`.
///
/// Falls back to an unconstrained choice when propagation leaves nothing to
/// choose from, so every net with at least one variable yields a query.
pub fn sample_query(net: &BayesNet, rng: &mut impl Rng) -> Query {
    assert!(!net.is_empty(), "cannot query an empty network");
    let Some(base) = Level0::new(net) else {
        return Query::new(vec![], rng.gen_range(0..net.len())).expect("query without evidence");
    };
    let candidates = base.unforced(net);
    if candidates.len() < 2 {
        let q = candidates.first().copied().unwrap_or_else(|| rng.gen_range(0..net.len()));
        return Query::new(vec![], q).expect("query without evidence");
    }

    let mut fallback = None;
    for _ in 0..EVIDENCE_ATTEMPTS {
        let ev = *candidates.choose(rng).unwrap();
        let values: Vec<usize> = base.marks.unpruned_values(ev).collect();
        let evidence = Assignment::new(ev, *values.choose(rng).unwrap());
        let mut state = Level0 {
            trail: base.trail.clone(),
            tracker: base.tracker.clone(),
            marks: base.marks.clone(),
        };
        let consistent = state.assign(net, evidence);
        let remaining = state.unforced(net);
        let Some(&q) = remaining.choose(rng) else {
            continue;
        };
        let query = Query::new(vec![evidence], q).expect("query differs from evidence");
        if consistent {
            return query;
        }
        fallback.get_or_insert(query);
    }
    fallback.unwrap_or_else(|| {
        let q = *candidates.choose(rng).unwrap();
        Query::new(vec![], q).expect("query without evidence")
    })
}

/// Parameters of a random instance population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub vars: usize,
    pub max_parents: usize,
    pub max_domain: usize,
    pub zero_fraction: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            vars: 10,
            max_parents: 3,
            max_domain: 3,
            zero_fraction: 0.25,
        }
    }
}

/// A seeded random net with a protocol query drawn from the same seed.
pub fn random_instance(spec: RandomSpec, seed: u64) -> (BayesNet, Query) {
    let net = random_network(spec.vars, spec.max_parents, spec.max_domain, spec.zero_fraction, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let query = sample_query(&net, &mut rng);
    (net, query)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Two disjoint binary chains of length `k`, no evidence, query on the
    /// head of the first.
    DisjointChains(usize),
    /// One binary chain of `n` variables, evidence on the first, query on
    /// the last.
    SingleChain(usize),
    /// Seeds `from..to` of the random population.
    Random { spec: RandomSpec, from: u64, to: u64 },
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub label: String,
    pub net: BayesNet,
    pub query: Query,
}

impl Family {
    pub fn instances(&self) -> Vec<Instance> {
        match *self {
            Family::DisjointChains(k) => vec![Instance {
                label: format!("disjoint-chains-{k}"),
                net: chains(&[k, k]),
                query: Query::new(vec![], 0).expect("head query"),
            }],
            Family::SingleChain(n) => {
                let query = if n > 1 {
                    Query::new(vec![Assignment::new(0, 0)], n - 1)
                } else {
                    Query::new(vec![], 0)
                };
                vec![Instance {
                    label: format!("single-chain-{n}"),
                    net: binary_chain(n),
                    query: query.expect("chain query"),
                }]
            }
            Family::Random { spec, from, to } => (from..to)
                .map(|seed| {
                    let (net, query) = random_instance(spec, seed);
                    Instance {
                        label: format!("random-{}-{seed}", spec.vars),
                        net,
                        query,
                    }
                })
                .collect(),
        }
    }
}
