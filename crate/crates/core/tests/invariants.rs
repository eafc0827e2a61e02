mod common;

use proptest::prelude::*;
use valelim::cache::{FactorCache, TrailView};
use valelim::engine::{EngineConfig, Mode};
use valelim::model::validate_network;
use valelim::netio::{from_json, parse_bif, random_network, to_json, write_bif};
use valelim::oracle::{gen_and_sum, posterior_bruteforce, OracleBudget};
use valelim::varelim::{min_fill_order, ve_query};
use valelim::workload::random_instance;
use valelim::{Assignment, Factor, VarId};

use common::{run, spec};

const BUDGET: OracleBudget = OracleBudget { max_states: 1 << 20 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_networks_validate(
        seed in any::<u64>(),
        n in 1usize..=16,
        max_parents in 0usize..=4,
        max_domain in 2usize..=4,
        zeros in 0.0f64..0.9,
    ) {
        let net = random_network(n, max_parents, max_domain, zeros, seed);
        prop_assert_eq!(net.len(), n);
        prop_assert!(validate_network(&net).is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serializations_round_trip(seed in any::<u64>(), n in 1usize..=12, zeros in 0.0f64..0.5) {
        let net = random_network(n, 3, 4, zeros, seed);
        let bif = write_bif(&net);
        let once = parse_bif(&bif).unwrap();
        prop_assert_eq!(&once, &net);
        prop_assert_eq!(parse_bif(&write_bif(&once)).unwrap(), once);
        prop_assert_eq!(from_json(&to_json(&net)).unwrap(), net);
    }

    #[test]
    fn elimination_matches_enumeration(seed in any::<u64>(), vars in 1usize..=9, zeros in prop::sample::select(vec![0.0, 0.25])) {
        let (net, query) = random_instance(spec(vars, 4, zeros), seed);
        let mut excluded: Vec<VarId> = query.evidence.iter().map(|a| a.var).collect();
        excluded.push(query.query_var);
        let order = min_fill_order(&net, &excluded);
        let ve = ve_query(&net, &query, &order).unwrap();
        let brute = posterior_bruteforce(&net, &query, BUDGET).unwrap();
        prop_assert!(ve.max_abs_diff(&brute) <= 1e-9, "{ve:?} vs {brute:?}");
    }

    #[test]
    fn enumeration_of_nothing_is_one(seed in any::<u64>(), vars in 1usize..=10, zeros in 0.0f64..0.5) {
        let net = random_network(vars, 3, 3, zeros, seed);
        let total = gen_and_sum(&net, &[], BUDGET).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        let out = run(&net, &valelim::Query::new(vec![], 0).unwrap(), &EngineConfig::with_mode(Mode::GenAndSum));
        prop_assert!((out.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn forward_checking_never_adds_nodes(seed in any::<u64>(), vars in 2usize..=10) {
        let (net, query) = random_instance(spec(vars, 3, 0.25), seed);
        for mode in [Mode::ProbBt, Mode::ValueElim] {
            let with = run(&net, &query, &EngineConfig { forward_checking: true, ..EngineConfig::with_mode(mode) });
            let without = run(&net, &query, &EngineConfig { forward_checking: false, ..EngineConfig::with_mode(mode) });
            prop_assert!(with.posterior.max_abs_diff(&without.posterior) <= 1e-9);
            prop_assert!(with.stats.nodes <= without.stats.nodes, "{mode:?}: {} > {}", with.stats.nodes, without.stats.nodes);
        }
    }
}

#[derive(Debug, Clone)]
struct StackTrail {
    values: Vec<Option<usize>>,
    levels: Vec<Option<usize>>,
    stack: Vec<VarId>,
}

impl StackTrail {
    fn new(n: usize) -> Self {
        Self {
            values: vec![None; n],
            levels: vec![None; n],
            stack: Vec::new(),
        }
    }
}

impl TrailView for StackTrail {
    fn value(&self, var: VarId) -> Option<usize> {
        self.values[var]
    }
    fn level(&self, var: VarId) -> Option<usize> {
        self.levels[var]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Push(VarId, usize),
    Pop,
    Cache(Vec<(VarId, usize)>, Vec<VarId>),
}

const VARS: usize = 6;
const CARD: usize = 2;

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..VARS, 0..CARD).prop_map(|(v, d)| Op::Push(v, d)),
        2 => Just(Op::Pop),
        2 => (prop::collection::btree_map(0..VARS, 0..CARD, 1..=3), prop::collection::btree_set(0..VARS, 0..=2))
            .prop_map(|(dset, sset)| Op::Cache(dset.into_iter().collect(), sset.into_iter().collect())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// The watch scheme reports exactly the factors a full scan finds.
    #[test]
    fn watched_activation_matches_scan(ops in prop::collection::vec(op(), 1..60)) {
        let mut cache = FactorCache::new(&[CARD; VARS], None);
        let mut trail = StackTrail::new(VARS);
        for op in ops {
            match op {
                Op::Push(v, d) => {
                    if trail.values[v].is_some() {
                        continue;
                    }
                    let just = Assignment::new(v, d);
                    trail.values[v] = Some(d);
                    trail.levels[v] = Some(trail.stack.len() + 1);
                    trail.stack.push(v);
                    let free = |u: VarId| trail.values[u].is_none();
                    let mut got: Vec<Factor> = cache
                        .activated_factors(just, &trail, free)
                        .into_iter()
                        .map(|id| cache.factor(id).clone())
                        .collect();
                    let mut want: Vec<Factor> = cache
                        .factors()
                        .filter(|f| f.dset.contains(&just))
                        .filter(|f| f.dset.iter().all(|&a| trail.satisfies(a)))
                        .filter(|f| f.sset.iter().all(|&u| free(u)))
                        .cloned()
                        .collect();
                    got.sort_by(|a, b| a.dset.cmp(&b.dset).then(a.sset.cmp(&b.sset)));
                    want.sort_by(|a, b| a.dset.cmp(&b.dset).then(a.sset.cmp(&b.sset)));
                    prop_assert_eq!(got, want);
                }
                Op::Pop => {
                    if let Some(v) = trail.stack.pop() {
                        trail.values[v] = None;
                        trail.levels[v] = None;
                    }
                }
                Op::Cache(dset, sset) => {
                    let dset: Vec<Assignment> = dset.into_iter().map(|(v, d)| Assignment::new(v, d)).collect();
                    let sset: Vec<VarId> = sset.into_iter().filter(|u| !dset.iter().any(|a| a.var == *u)).collect();
                    let factor = Factor::new(dset, sset, 0.5).unwrap();
                    cache.cache_factor(factor, &trail).unwrap();
                }
            }
        }
    }
}
