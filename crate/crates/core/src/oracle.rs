//! Ground truth by exhaustive enumeration.
//!
//! Everything here recurses over variables in id order and never prunes.
//! These functions exist to be obviously correct; they are exponential and
//! guarded by an [`OracleBudget`].

use thiserror::Error;

use crate::cache::Factor;
use crate::model::{Assignment, BayesNet, Posterior, Query, VarId};

/// Relative tolerance used when comparing a factor value with its recomputation.
pub const FACTOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_states: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_states: 1 << 20 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration needs {needed} states, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("variable {var} is pinned to two different values")]
    InconsistentPin { var: VarId },
    #[error("assignment {0} is out of range")]
    OutOfRange(Assignment),
    #[error("factor dset and sset share variable {var}")]
    Overlap { var: VarId },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Outcome of [`check_factor_valid`].
#[derive(Debug, Clone, PartialEq)]
pub enum FactorCheck {
    Valid,
    /// An outside instantiation `u` at which `S(u) / P(u)` differs from the value.
    Counterexample {
        outside: Vec<Assignment>,
        sum: f64,
        context: f64,
    },
    /// A CPT not covered by `Dset ∪ Sset` mentions a subsumed variable, so the
    /// subsumed sum cannot factor out as a constant.
    Coupled { cpt: usize },
}

impl FactorCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, FactorCheck::Valid)
    }
}

/// Outcome of [`check_nogood`].
#[derive(Debug, Clone, PartialEq)]
pub enum NogoodCheck {
    Sound,
    Counterexample { completion: Vec<usize>, probability: f64 },
}

impl NogoodCheck {
    pub fn is_sound(&self) -> bool {
        matches!(self, NogoodCheck::Sound)
    }
}

fn pin(net: &BayesNet, pinned: &[Assignment]) -> Result<Vec<Option<usize>>, OracleError> {
    let mut values = vec![None; net.len()];
    for &a in pinned {
        if a.var >= net.len() || a.value >= net.card(a.var) {
            return Err(OracleError::OutOfRange(a));
        }
        match values[a.var] {
            Some(v) if v != a.value => return Err(OracleError::InconsistentPin { var: a.var }),
            _ => values[a.var] = Some(a.value),
        }
    }
    Ok(values)
}

fn charge(net: &BayesNet, vars: &[VarId], budget: OracleBudget) -> Result<(), OracleError> {
    let needed = net.state_count(vars.iter().copied());
    if needed > budget.max_states {
        Err(OracleError::BudgetExceeded {
            needed,
            budget: budget.max_states,
        })
    } else {
        Ok(())
    }
}

// Calls `visit` once per instantiation of `vars` (first variable slowest),
// writing each instantiation into `values`. Restores the entries afterwards.
fn for_each_instantiation(
    net: &BayesNet,
    vars: &[VarId],
    values: &mut [Option<usize>],
    visit: &mut dyn FnMut(&[Option<usize>]),
) {
    match vars.split_first() {
        None => visit(values),
        Some((&v, rest)) => {
            for d in 0..net.card(v) {
                values[v] = Some(d);
                for_each_instantiation(net, rest, values, visit);
            }
            values[v] = None;
        }
    }
}

fn joint(net: &BayesNet, values: &[Option<usize>]) -> f64 {
    let mut prod = 1.0;
    for cpt in net.cpts() {
        prod *= cpt.eval_with(|v| values[v].unwrap());
    }
    prod
}

fn gen_and_sum_rec(net: &BayesNet, values: &mut [Option<usize>], var: VarId) -> f64 {
    if var == net.len() {
        return joint(net, values);
    }
    if values[var].is_some() {
        return gen_and_sum_rec(net, values, var + 1);
    }
    let mut sum = 0.0;
    for d in 0..net.card(var) {
        values[var] = Some(d);
        sum += gen_and_sum_rec(net, values, var + 1);
    }
    values[var] = None;
    sum
}

/// Sum of the joint over every completion of `pinned`, i.e. `Pr(pinned)`.
pub fn gen_and_sum(
    net: &BayesNet,
    pinned: &[Assignment],
    budget: OracleBudget,
) -> Result<f64, OracleError> {
    let mut values = pin(net, pinned)?;
    let free: Vec<VarId> = (0..net.len()).filter(|&v| values[v].is_none()).collect();
    charge(net, &free, budget)?;
    Ok(gen_and_sum_rec(net, &mut values, 0))
}

/// Posterior of the query variable by enumeration of `Pr(Q=d ∧ E)`.
pub fn posterior_bruteforce(
    net: &BayesNet,
    query: &Query,
    budget: OracleBudget,
) -> Result<Posterior, OracleError> {
    query.check(net)?;
    let mut masses = Vec::with_capacity(net.card(query.query_var));
    let mut pinned = query.evidence.clone();
    pinned.push(Assignment::new(query.query_var, 0));
    for d in 0..net.card(query.query_var) {
        pinned.last_mut().unwrap().value = d;
        masses.push(gen_and_sum(net, &pinned, budget)?);
    }
    Ok(Posterior::from_masses(&masses))
}

/// Checks that summing the joint over `factor.sset` under `factor.dset` yields
/// `factor.val` times the product of every CPT that does not mention a
/// subsumed variable. CPTs over dset variables alone are constants and belong
/// to that outside product, not to the value.
///
/// For `val = 0` the factor is valid iff the subsumed sum vanishes at every
/// outside instantiation.
pub fn check_factor_valid(
    net: &BayesNet,
    factor: &Factor,
    budget: OracleBudget,
) -> Result<FactorCheck, OracleError> {
    let mut values = pin(net, &factor.dset)?;
    let mut in_sset = vec![false; net.len()];
    for &s in &factor.sset {
        if values[s].is_some() {
            return Err(OracleError::Overlap { var: s });
        }
        in_sset[s] = true;
    }
    let covered = |v: VarId| values[v].is_some() || in_sset[v];
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (i, cpt) in net.cpts().iter().enumerate() {
        if cpt.scope().iter().all(|&v| covered(v)) && cpt.scope().iter().any(|&v| in_sset[v]) {
            inside.push(i);
        } else {
            outside.push(i);
        }
    }
    if factor.val != 0.0 {
        if let Some(&cpt) = outside
            .iter()
            .find(|&&c| net.cpt(c).scope().iter().any(|&v| in_sset[v]))
        {
            return Ok(FactorCheck::Coupled { cpt });
        }
    }

    let free: Vec<VarId> = (0..net.len())
        .filter(|&v| values[v].is_none() && !in_sset[v])
        .collect();
    let sset = factor.sset.clone();
    let mut all = free.clone();
    all.extend(&sset);
    charge(net, &all, budget)?;

    let mut verdict = FactorCheck::Valid;
    let mut scratch = values.clone();
    for_each_instantiation(net, &free, &mut values, &mut |u| {
        if !verdict.is_valid() {
            return;
        }
        scratch.copy_from_slice(u);
        let mut sum = 0.0;
        for_each_instantiation(net, &sset, &mut scratch, &mut |full| sum += joint(net, full));
        let context: f64 = if factor.val == 0.0 {
            1.0
        } else {
            outside
                .iter()
                .map(|&c| net.cpt(c).eval_with(|v| u[v].unwrap()))
                .product()
        };
        let ok = if factor.val == 0.0 {
            sum == 0.0
        } else if context == 0.0 {
            true
        } else {
            let ratio = sum / context;
            (ratio - factor.val).abs() <= FACTOR_TOLERANCE * factor.val.abs().max(1.0)
        };
        if !ok {
            verdict = FactorCheck::Counterexample {
                outside: free
                    .iter()
                    .map(|&v| Assignment::new(v, u[v].unwrap()))
                    .collect(),
                sum,
                context,
            };
        }
    });
    Ok(verdict)
}

/// Checks that every completion of `nogood` has zero joint probability.
pub fn check_nogood(
    net: &BayesNet,
    nogood: &[Assignment],
    budget: OracleBudget,
) -> Result<NogoodCheck, OracleError> {
    let mut values = pin(net, nogood)?;
    let free: Vec<VarId> = (0..net.len()).filter(|&v| values[v].is_none()).collect();
    charge(net, &free, budget)?;
    let mut verdict = NogoodCheck::Sound;
    for_each_instantiation(net, &free, &mut values, &mut |full| {
        if verdict.is_sound() {
            let p = joint(net, full);
            if p != 0.0 {
                verdict = NogoodCheck::Counterexample {
                    completion: full.iter().map(|v| v.unwrap()).collect(),
                    probability: p,
                };
            }
        }
    });
    Ok(verdict)
}
