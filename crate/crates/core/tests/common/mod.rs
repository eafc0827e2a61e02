#![allow(dead_code)]

use valelim::engine::{run_query, EngineConfig, Mode, Ordering, RunOutcome};
use valelim::workload::RandomSpec;
use valelim::{BayesNet, Query};

pub const MODES: [Mode; 3] = [Mode::GenAndSum, Mode::ProbBt, Mode::ValueElim];

pub fn spec(vars: usize, max_domain: usize, zero_fraction: f64) -> RandomSpec {
    RandomSpec {
        vars,
        max_parents: 3,
        max_domain,
        zero_fraction,
    }
}

/// Every engine configuration the cross-checks compare.
pub fn configurations() -> Vec<(String, EngineConfig)> {
    let mut out = vec![("gen-and-sum".to_string(), EngineConfig::with_mode(Mode::GenAndSum))];
    for ordering in [Ordering::MinFillReverse, Ordering::Dynamic(None)] {
        out.push((
            format!("prob-bt/{}", ordering.name()),
            EngineConfig {
                mode: Mode::ProbBt,
                ordering: ordering.clone(),
                ..EngineConfig::default()
            },
        ));
        for budget in [None, Some(8), Some(1)] {
            out.push((
                format!("value-elim/{}/{budget:?}", ordering.name()),
                EngineConfig {
                    mode: Mode::ValueElim,
                    ordering: ordering.clone(),
                    cache_budget: budget,
                    trace: true,
                    ..EngineConfig::default()
                },
            ));
        }
    }
    out
}

pub fn run(net: &BayesNet, query: &Query, config: &EngineConfig) -> RunOutcome {
    run_query(net, query, config).expect("engine run")
}
