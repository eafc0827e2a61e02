//! Networks, assignments, CPT evaluation and static preprocessing.
//!
//! A [`BayesNet`] is immutable once built. Runtime code addresses variables
//! and values by dense indices; labels are only consulted at the IO boundary.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Dense variable index, contiguous `0..n` within a network.
pub type VarId = usize;

/// Absolute tolerance for CPT row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn new(id: VarId, name: impl Into<String>, domain: Vec<String>) -> Self {
        Self {
            id,
            name: name.into(),
            domain,
        }
    }

    pub fn card(&self) -> usize {
        self.domain.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.domain.iter().position(|l| l == label)
    }
}

/// A single variable/value pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub var: VarId,
    pub value: usize,
}

impl Assignment {
    pub const fn new(var: VarId, value: usize) -> Self {
        Self { var, value }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}={}", self.var, self.value)
    }
}

/// Conditional probability table of `child` given `parents`.
///
/// The table is row-major over `(parents..., child)`: the child value varies
/// fastest, the first parent slowest.
#[derive(Debug, Clone)]
pub struct Cpt {
    child: VarId,
    parents: Vec<VarId>,
    table: Vec<f64>,
    // parents followed by the child; filled in by BayesNet::from_parts
    scope: Vec<VarId>,
    strides: Vec<usize>,
}

impl PartialEq for Cpt {
    fn eq(&self, other: &Self) -> bool {
        self.child == other.child && self.parents == other.parents && self.table == other.table
    }
}

impl Cpt {
    pub fn new(child: VarId, parents: Vec<VarId>, table: Vec<f64>) -> Self {
        let mut scope = parents.clone();
        scope.push(child);
        Self {
            child,
            parents,
            table,
            scope,
            strides: Vec::new(),
        }
    }

    pub fn child(&self) -> VarId {
        self.child
    }

    pub fn parents(&self) -> &[VarId] {
        &self.parents
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Parents followed by the child.
    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    fn compute_strides(&mut self, cards: &[usize]) {
        let mut strides = vec![1; self.scope.len()];
        for i in (0..self.scope.len().saturating_sub(1)).rev() {
            let next = self.scope[i + 1];
            strides[i] = strides[i + 1] * cards.get(next).copied().unwrap_or(0);
        }
        self.strides = strides;
    }

    /// Table entry selected by `value_of`, which must return a value for every
    /// variable in the scope.
    #[inline]
    pub fn eval_with(&self, mut value_of: impl FnMut(VarId) -> usize) -> f64 {
        let idx: usize = self
            .scope
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| value_of(v) * s)
            .sum();
        self.table[idx]
    }

    /// Table entry for a partial instantiation indexed by variable id.
    pub fn eval(&self, values: &[Option<usize>]) -> Result<f64, ModelError> {
        for &v in &self.scope {
            if values.get(v).copied().flatten().is_none() {
                return Err(ModelError::Unassigned { var: v });
            }
        }
        Ok(self.eval_with(|v| values[v].unwrap()))
    }
}

/// Ways a network can be malformed.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IdMismatch { position: usize, id: VarId },
    EmptyDomain { var: VarId },
    DuplicateLabel { var: VarId, label: String },
    CptCount { expected: usize, found: usize },
    CptChild { cpt: usize, child: VarId },
    UnknownParent { cpt: usize, parent: VarId },
    DuplicateParent { cpt: usize, parent: VarId },
    ChildInParents { cpt: usize },
    TableLength { cpt: usize, expected: usize, found: usize },
    EntryOutOfRange { cpt: usize, row: usize, value: f64 },
    RowSum { cpt: usize, row: usize, sum: f64 },
    Cycle { names: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IdMismatch { position, id } => {
                write!(f, "variable at position {position} has id {id}")
            }
            Violation::EmptyDomain { var } => write!(f, "variable {var} has an empty domain"),
            Violation::DuplicateLabel { var, label } => {
                write!(f, "variable {var} repeats label {label:?}")
            }
            Violation::CptCount { expected, found } => {
                write!(f, "expected {expected} cpts, found {found}")
            }
            Violation::CptChild { cpt, child } => {
                write!(f, "cpt {cpt} is for child {child}, expected {cpt}")
            }
            Violation::UnknownParent { cpt, parent } => {
                write!(f, "cpt {cpt} references unknown parent {parent}")
            }
            Violation::DuplicateParent { cpt, parent } => {
                write!(f, "cpt {cpt} lists parent {parent} twice")
            }
            Violation::ChildInParents { cpt } => write!(f, "cpt {cpt} lists its child as a parent"),
            Violation::TableLength {
                cpt,
                expected,
                found,
            } => write!(f, "cpt {cpt} table has {found} entries, expected {expected}"),
            Violation::EntryOutOfRange { cpt, row, value } => {
                write!(f, "cpt {cpt} row {row}: entry {value} outside [0, 1]")
            }
            Violation::RowSum { cpt, row, sum } => {
                let shown = (sum * 1e9).round() / 1e9;
                write!(f, "cpt {cpt} row {row}: row sum {shown} ≠ 1")
            }
            Violation::Cycle { names } => write!(f, "cycle {}", names.join(",")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("variable {var} is not assigned")]
    Unassigned { var: VarId },
    #[error("variable {var} does not exist")]
    UnknownVariable { var: VarId },
    #[error("value {value} out of range for variable {var}")]
    ValueOutOfRange { var: VarId, value: usize },
    #[error("variable {var} appears twice in the evidence")]
    DuplicateEvidence { var: VarId },
    #[error("query variable {var} is also evidence")]
    QueryInEvidence { var: VarId },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A discrete Bayesian network: one CPT per variable, indexed by child id.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    variables: Vec<Variable>,
    cpts: Vec<Cpt>,
    by_name: HashMap<String, VarId>,
}

impl BayesNet {
    /// Builds a network and rejects it unless [`validate_network`] passes.
    pub fn new(variables: Vec<Variable>, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        let net = Self::from_parts(variables, cpts);
        let violations = validate_network(&net);
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Builds a network without validation. Evaluation on an invalid network
    /// may panic; run [`validate_network`] first.
    pub fn from_parts(variables: Vec<Variable>, mut cpts: Vec<Cpt>) -> Self {
        let cards: Vec<usize> = variables.iter().map(Variable::card).collect();
        for cpt in &mut cpts {
            cpt.compute_strides(&cards);
        }
        let by_name = variables
            .iter()
            .map(|v| (v.name.clone(), v.id))
            .collect();
        Self {
            variables,
            cpts,
            by_name,
        }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var]
    }

    pub fn card(&self, var: VarId) -> usize {
        self.variables[var].card()
    }

    pub fn cards(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::card).collect()
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn cpt(&self, child: VarId) -> &Cpt {
        &self.cpts[child]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    /// For each variable, the ids of CPTs whose scope contains it.
    pub fn cpts_containing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, cpt) in self.cpts.iter().enumerate() {
            for &v in cpt.scope() {
                out[v].push(i);
            }
        }
        out
    }

    /// For each variable, the variables that list it as a parent.
    pub fn children(&self) -> Vec<Vec<VarId>> {
        let mut out = vec![Vec::new(); self.len()];
        for cpt in &self.cpts {
            for &p in cpt.parents() {
                out[p].push(cpt.child());
            }
        }
        out
    }

    /// Product of the domain sizes of `vars`, saturating.
    pub fn state_count(&self, vars: impl IntoIterator<Item = VarId>) -> u128 {
        vars.into_iter()
            .fold(1u128, |acc, v| acc.saturating_mul(self.card(v) as u128))
    }
}

/// Returns every violation of the network invariants; empty means valid.
pub fn validate_network(net: &BayesNet) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = net.variables.len();
    for (pos, var) in net.variables.iter().enumerate() {
        if var.id != pos {
            out.push(Violation::IdMismatch {
                position: pos,
                id: var.id,
            });
        }
        if var.domain.is_empty() {
            out.push(Violation::EmptyDomain { var: pos });
        }
        for (i, label) in var.domain.iter().enumerate() {
            if var.domain[..i].contains(label) {
                out.push(Violation::DuplicateLabel {
                    var: pos,
                    label: label.clone(),
                });
            }
        }
    }
    if net.cpts.len() != n {
        out.push(Violation::CptCount {
            expected: n,
            found: net.cpts.len(),
        });
    }

    let mut structurally_ok = out.is_empty();
    for (i, cpt) in net.cpts.iter().enumerate() {
        if cpt.child != i {
            out.push(Violation::CptChild {
                cpt: i,
                child: cpt.child,
            });
            structurally_ok = false;
        }
        for (j, &p) in cpt.parents.iter().enumerate() {
            if p >= n {
                out.push(Violation::UnknownParent { cpt: i, parent: p });
                structurally_ok = false;
            } else if cpt.parents[..j].contains(&p) {
                out.push(Violation::DuplicateParent { cpt: i, parent: p });
                structurally_ok = false;
            }
        }
        if cpt.parents.contains(&cpt.child) {
            out.push(Violation::ChildInParents { cpt: i });
            structurally_ok = false;
        }
    }
    if !structurally_ok {
        return out;
    }

    for (i, cpt) in net.cpts.iter().enumerate() {
        let expected = net.state_count(cpt.scope().iter().copied()) as usize;
        if cpt.table.len() != expected {
            out.push(Violation::TableLength {
                cpt: i,
                expected,
                found: cpt.table.len(),
            });
            continue;
        }
        let row_len = net.card(cpt.child);
        for (row, chunk) in cpt.table.chunks(row_len).enumerate() {
            for &p in chunk {
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    out.push(Violation::EntryOutOfRange {
                        cpt: i,
                        row,
                        value: p,
                    });
                }
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(Violation::RowSum { cpt: i, row, sum });
            }
        }
    }

    if let Some(cycle) = find_cycle(net) {
        out.push(Violation::Cycle {
            names: cycle
                .into_iter()
                .map(|v| net.variables[v].name.clone())
                .collect(),
        });
    }
    out
}

// Kahn's algorithm; on failure walks parent links among the leftovers to
// extract one cycle, reported parent-to-child starting at its smallest id.
fn find_cycle(net: &BayesNet) -> Option<Vec<VarId>> {
    let n = net.len();
    let children = net.children();
    let mut indeg: Vec<usize> = net.cpts.iter().map(|c| c.parents.len()).collect();
    let mut stack: Vec<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut done = vec![false; n];
    while let Some(v) = stack.pop() {
        done[v] = true;
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                stack.push(c);
            }
        }
    }
    let start = (0..n).find(|&v| !done[v])?;
    let mut seen = vec![None; n];
    let mut walk = Vec::new();
    let mut cur = start;
    while seen[cur].is_none() {
        seen[cur] = Some(walk.len());
        walk.push(cur);
        cur = *net.cpts[cur]
            .parents
            .iter()
            .find(|&&p| !done[p])
            .expect("leftover node keeps a leftover parent");
    }
    let mut cycle: Vec<VarId> = walk[seen[cur].unwrap()..].to_vec();
    // walk follows child -> parent
    cycle.reverse();
    let min_pos = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(i, _)| i)
        .unwrap();
    cycle.rotate_left(min_pos);
    Some(cycle)
}

/// Evidence plus a single query variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub evidence: Vec<Assignment>,
    pub query_var: VarId,
}

impl Query {
    pub fn new(evidence: Vec<Assignment>, query_var: VarId) -> Result<Self, ModelError> {
        for (i, a) in evidence.iter().enumerate() {
            if evidence[..i].iter().any(|b| b.var == a.var) {
                return Err(ModelError::DuplicateEvidence { var: a.var });
            }
            if a.var == query_var {
                return Err(ModelError::QueryInEvidence { var: query_var });
            }
        }
        Ok(Self {
            evidence,
            query_var,
        })
    }

    /// Checks the query against a network's variables and domains.
    pub fn check(&self, net: &BayesNet) -> Result<(), ModelError> {
        if self.query_var >= net.len() {
            return Err(ModelError::UnknownVariable {
                var: self.query_var,
            });
        }
        for a in &self.evidence {
            if a.var >= net.len() {
                return Err(ModelError::UnknownVariable { var: a.var });
            }
            if a.value >= net.card(a.var) {
                return Err(ModelError::ValueOutOfRange {
                    var: a.var,
                    value: a.value,
                });
            }
        }
        Self::new(self.evidence.clone(), self.query_var).map(|_| ())
    }

    pub fn is_evidence(&self, var: VarId) -> bool {
        self.evidence.iter().any(|a| a.var == var)
    }
}

/// A normalized query posterior, or the flag raised when `Pr(E) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Distribution(Vec<f64>),
    ZeroEvidence,
}

impl Posterior {
    /// Normalizes unnormalized joint masses `Pr(Q=d ∧ E)`.
    pub fn from_masses(masses: &[f64]) -> Self {
        let z: f64 = masses.iter().sum();
        if z == 0.0 {
            Posterior::ZeroEvidence
        } else {
            Posterior::Distribution(masses.iter().map(|m| m / z).collect())
        }
    }

    pub fn is_zero_evidence(&self) -> bool {
        matches!(self, Posterior::ZeroEvidence)
    }

    pub fn distribution(&self) -> Option<&[f64]> {
        match self {
            Posterior::Distribution(d) => Some(d),
            Posterior::ZeroEvidence => None,
        }
    }

    /// Largest per-entry absolute difference; infinite when the two disagree
    /// on the zero-evidence flag or on length.
    pub fn max_abs_diff(&self, other: &Posterior) -> f64 {
        match (self, other) {
            (Posterior::ZeroEvidence, Posterior::ZeroEvidence) => 0.0,
            (Posterior::Distribution(a), Posterior::Distribution(b)) if a.len() == b.len() => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        }
    }
}

/// Value of the CPT selected by a complete-enough instantiation.
pub fn eval_cpt(cpt: &Cpt, values: &[Option<usize>]) -> Result<f64, ModelError> {
    cpt.eval(values)
}

/// Product of all CPTs under a complete assignment.
pub fn joint_probability(net: &BayesNet, values: &[Option<usize>]) -> Result<f64, ModelError> {
    for v in 0..net.len() {
        if values.get(v).copied().flatten().is_none() {
            return Err(ModelError::Unassigned { var: v });
        }
    }
    Ok(net
        .cpts
        .iter()
        .map(|c| c.eval_with(|v| values[v].unwrap()))
        .product())
}

/// Result of barren-variable removal.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub net: BayesNet,
    pub query: Query,
    /// Removed variables (original ids) in removal order.
    pub removed: Vec<VarId>,
    /// Original id of each reduced-net variable.
    pub kept: Vec<VarId>,
    /// Reduced id of each original variable, if kept.
    pub old_to_new: Vec<Option<VarId>>,
}

impl Reduction {
    /// The identity reduction.
    pub fn identity(net: &BayesNet, query: &Query) -> Self {
        Self {
            net: net.clone(),
            query: query.clone(),
            removed: Vec::new(),
            kept: (0..net.len()).collect(),
            old_to_new: (0..net.len()).map(Some).collect(),
        }
    }
}

/// Repeatedly strips variables that are neither query nor evidence and that
/// parent no remaining CPT. Summing such a variable out yields the constant 1,
/// so the query posterior is unchanged.
pub fn remove_barren(net: &BayesNet, query: &Query) -> Reduction {
    let n = net.len();
    let mut kept = vec![true; n];
    let mut child_count: Vec<usize> = net.children().iter().map(Vec::len).collect();
    let mut removed = Vec::new();
    loop {
        let mut changed = false;
        for v in 0..n {
            if kept[v] && child_count[v] == 0 && v != query.query_var && !query.is_evidence(v) {
                kept[v] = false;
                removed.push(v);
                for &p in net.cpt(v).parents() {
                    child_count[p] -= 1;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if removed.is_empty() {
        return Reduction::identity(net, query);
    }

    let kept_ids: Vec<VarId> = (0..n).filter(|&v| kept[v]).collect();
    let mut old_to_new = vec![None; n];
    for (new, &old) in kept_ids.iter().enumerate() {
        old_to_new[old] = Some(new);
    }
    let variables = kept_ids
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let v = net.variable(old);
            Variable::new(new, v.name.clone(), v.domain.clone())
        })
        .collect();
    let cpts = kept_ids
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let c = net.cpt(old);
            let parents = c
                .parents()
                .iter()
                .map(|&p| old_to_new[p].expect("parent of a kept variable is kept"))
                .collect();
            Cpt::new(new, parents, c.table().to_vec())
        })
        .collect();
    let reduced = BayesNet::from_parts(variables, cpts);
    let query = Query {
        evidence: query
            .evidence
            .iter()
            .map(|a| Assignment::new(old_to_new[a.var].unwrap(), a.value))
            .collect(),
        query_var: old_to_new[query.query_var].unwrap(),
    };
    Reduction {
        net: reduced,
        query,
        removed,
        kept: kept_ids,
        old_to_new,
    }
}

/// Reference networks used throughout the tests and examples.
pub mod fixtures {
    use super::*;

    fn labels(prefix: &str, k: usize) -> Vec<String> {
        (0..k).map(|i| format!("{prefix}{i}")).collect()
    }

    /// A→B→C with Pr(A)=(0.6,0.4), Pr(B|A=0)=(0.7,0.3), Pr(B|A=1)=(0.2,0.8),
    /// Pr(C|B=0)=(0.5,0.5), Pr(C|B=1)=(0.9,0.1).
    pub fn reference_chain() -> BayesNet {
        BayesNet::new(
            vec![
                Variable::new(0, "A", labels("a", 2)),
                Variable::new(1, "B", labels("b", 2)),
                Variable::new(2, "C", labels("c", 2)),
            ],
            vec![
                Cpt::new(0, vec![], vec![0.6, 0.4]),
                Cpt::new(1, vec![0], vec![0.7, 0.3, 0.2, 0.8]),
                Cpt::new(2, vec![1], vec![0.5, 0.5, 0.9, 0.1]),
            ],
        )
        .expect("reference chain is valid")
    }

    /// A→B→C where Pr(C=0|B=1) = 0.
    pub fn deterministic_chain() -> BayesNet {
        BayesNet::new(
            vec![
                Variable::new(0, "A", labels("a", 2)),
                Variable::new(1, "B", labels("b", 2)),
                Variable::new(2, "C", labels("c", 2)),
            ],
            vec![
                Cpt::new(0, vec![], vec![0.6, 0.4]),
                Cpt::new(1, vec![0], vec![0.7, 0.3, 0.2, 0.8]),
                Cpt::new(2, vec![1], vec![0.5, 0.5, 0.0, 1.0]),
            ],
        )
        .expect("deterministic chain is valid")
    }

    /// A single binary root with Pr(A) = (0.6, 0.4).
    pub fn single_root() -> BayesNet {
        BayesNet::new(
            vec![Variable::new(0, "A", labels("a", 2))],
            vec![Cpt::new(0, vec![], vec![0.6, 0.4])],
        )
        .expect("single root is valid")
    }

    /// A binary chain `X0 → X1 → … → X{n-1}` with alternating transition rows.
    pub fn binary_chain(n: usize) -> BayesNet {
        chains(&[n])
    }

    /// Disjoint binary chains of the given lengths, numbered consecutively.
    pub fn chains(lengths: &[usize]) -> BayesNet {
        let mut variables = Vec::new();
        let mut cpts = Vec::new();
        for (c, &len) in lengths.iter().enumerate() {
            for i in 0..len {
                let id = variables.len();
                let name = if lengths.len() == 1 {
                    format!("X{i}")
                } else {
                    format!("C{c}_{i}")
                };
                variables.push(Variable::new(id, name, labels("s", 2)));
                if i == 0 {
                    cpts.push(Cpt::new(id, vec![], vec![0.55, 0.45]));
                } else if i % 2 == 0 {
                    cpts.push(Cpt::new(id, vec![id - 1], vec![0.7, 0.3, 0.25, 0.75]));
                } else {
                    cpts.push(Cpt::new(id, vec![id - 1], vec![0.6, 0.4, 0.1, 0.9]));
                }
            }
        }
        BayesNet::new(variables, cpts).expect("chains are valid")
    }

    /// The diamond A→B, A→C, B→D, C→D with arbitrary valid tables.
    pub fn diamond() -> BayesNet {
        BayesNet::new(
            vec![
                Variable::new(0, "A", labels("a", 2)),
                Variable::new(1, "B", labels("b", 2)),
                Variable::new(2, "C", labels("c", 2)),
                Variable::new(3, "D", labels("d", 2)),
            ],
            vec![
                Cpt::new(0, vec![], vec![0.3, 0.7]),
                Cpt::new(1, vec![0], vec![0.9, 0.1, 0.4, 0.6]),
                Cpt::new(2, vec![0], vec![0.2, 0.8, 0.5, 0.5]),
                Cpt::new(3, vec![1, 2], vec![1.0, 0.0, 0.3, 0.7, 0.6, 0.4, 0.0, 1.0]),
            ],
        )
        .expect("diamond is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn full(vals: &[usize]) -> Vec<Option<usize>> {
        vals.iter().map(|&v| Some(v)).collect()
    }

    #[test]
    fn chain_is_valid() {
        assert!(validate_network(&reference_chain()).is_empty());
    }

    #[test]
    fn short_row_is_reported_with_location() {
        let net = BayesNet::from_parts(
            vec![Variable::new(0, "A", vec!["a0".into(), "a1".into()])],
            vec![Cpt::new(0, vec![], vec![0.7, 0.2])],
        );
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::RowSum { cpt: 0, row: 0, .. }));
        assert_eq!(v[0].to_string(), "cpt 0 row 0: row sum 0.9 ≠ 1");
    }

    #[test]
    fn two_cycle_is_reported() {
        let bin = || vec!["0".to_string(), "1".to_string()];
        let net = BayesNet::from_parts(
            vec![Variable::new(0, "A", bin()), Variable::new(1, "B", bin())],
            vec![
                Cpt::new(0, vec![1], vec![0.5, 0.5, 0.5, 0.5]),
                Cpt::new(1, vec![0], vec![0.5, 0.5, 0.5, 0.5]),
            ],
        );
        let v = validate_network(&net);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "cycle A,B");
    }

    #[test]
    fn structural_violations() {
        let bin = || vec!["0".to_string(), "1".to_string()];
        let net = BayesNet::from_parts(
            vec![Variable::new(0, "A", bin()), Variable::new(1, "B", vec![])],
            vec![Cpt::new(0, vec![0, 7], vec![0.5; 2])],
        );
        let v = validate_network(&net);
        assert!(v.contains(&Violation::EmptyDomain { var: 1 }));
        assert!(v.contains(&Violation::CptCount {
            expected: 2,
            found: 1
        }));
        assert!(BayesNet::new(net.variables().to_vec(), net.cpts().to_vec()).is_err());
    }

    #[test]
    fn eval_cpt_lookups() {
        let net = reference_chain();
        assert_eq!(eval_cpt(net.cpt(1), &[Some(0), Some(0), None]).unwrap(), 0.7);
        assert_eq!(eval_cpt(net.cpt(0), &[Some(1), None, None]).unwrap(), 0.4);
        let det = deterministic_chain();
        assert_eq!(eval_cpt(det.cpt(2), &[None, Some(1), Some(0)]).unwrap(), 0.0);
        assert_eq!(
            eval_cpt(net.cpt(2), &[Some(0), None, Some(0)]),
            Err(ModelError::Unassigned { var: 1 })
        );
    }

    #[test]
    fn joint_examples() {
        let net = reference_chain();
        let p = joint_probability(&net, &full(&[0, 0, 0])).unwrap();
        assert!((p - 0.6 * 0.7 * 0.5).abs() < 1e-15);
        assert!((p - 0.21).abs() < 1e-12);
        let det = deterministic_chain();
        assert_eq!(joint_probability(&det, &full(&[0, 1, 0])).unwrap(), 0.0);
        assert_eq!(joint_probability(&single_root(), &full(&[1])).unwrap(), 0.4);
        assert!(joint_probability(&net, &[Some(0), None, Some(0)]).is_err());
    }

    #[test]
    fn barren_examples() {
        let net = reference_chain();
        let r = remove_barren(&net, &Query::new(vec![], 1).unwrap());
        assert_eq!(r.removed, vec![2]);
        assert_eq!(r.net.len(), 2);
        assert_eq!(r.query.query_var, 1);

        let r = remove_barren(&net, &Query::new(vec![], 0).unwrap());
        assert_eq!(r.removed, vec![2, 1]);
        assert_eq!(r.net.len(), 1);

        let r = remove_barren(&net, &Query::new(vec![Assignment::new(2, 0)], 0).unwrap());
        assert!(r.removed.is_empty());
    }

    #[test]
    fn barren_remaps_ids() {
        // A→B, A→C; query C removes B and shifts C down.
        let bin = || vec!["0".to_string(), "1".to_string()];
        let net = BayesNet::new(
            vec![
                Variable::new(0, "A", bin()),
                Variable::new(1, "B", bin()),
                Variable::new(2, "C", bin()),
            ],
            vec![
                Cpt::new(0, vec![], vec![0.5, 0.5]),
                Cpt::new(1, vec![0], vec![0.1, 0.9, 0.8, 0.2]),
                Cpt::new(2, vec![0], vec![0.3, 0.7, 0.6, 0.4]),
            ],
        )
        .unwrap();
        let r = remove_barren(&net, &Query::new(vec![], 2).unwrap());
        assert_eq!(r.removed, vec![1]);
        assert_eq!(r.kept, vec![0, 2]);
        assert_eq!(r.query.query_var, 1);
        assert_eq!(r.net.cpt(1).parents(), &[0]);
        assert_eq!(r.net.variable(1).name, "C");
        assert!(validate_network(&r.net).is_empty());
    }

    #[test]
    fn query_rejects_bad_evidence() {
        let a = Assignment::new(0, 0);
        assert!(Query::new(vec![a, a], 1).is_err());
        assert!(Query::new(vec![a], 0).is_err());
        let q = Query::new(vec![Assignment::new(0, 5)], 1).unwrap();
        assert!(q.check(&reference_chain()).is_err());
    }

    #[test]
    fn posterior_normalization() {
        assert_eq!(Posterior::from_masses(&[0.0, 0.0]), Posterior::ZeroEvidence);
        let p = Posterior::from_masses(&[0.3, 0.1]);
        assert!((p.distribution().unwrap()[0] - 0.75).abs() < 1e-15);
        assert_eq!(p.max_abs_diff(&Posterior::ZeroEvidence), f64::INFINITY);
    }
}
