//! Variable Elimination over dense table functions.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{BayesNet, Cpt, ModelError, Posterior, Query, VarId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarElimError {
    #[error("elimination order must not contain evidence or query variable {var}")]
    Excluded { var: VarId },
    #[error("elimination order lists variable {var} twice")]
    Repeated { var: VarId },
    #[error("elimination order omits variable {var}")]
    Missing { var: VarId },
    #[error("variable {var} is out of range")]
    OutOfRange { var: VarId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A nonnegative function over a set of variables, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFunction {
    /// Variable ids; the last varies fastest in `table`.
    pub scope: Vec<VarId>,
    /// Domain size of each scope variable.
    pub cards: Vec<usize>,
    pub table: Vec<f64>,
}

impl TableFunction {
    pub fn scalar(value: f64) -> Self {
        Self {
            scope: Vec::new(),
            cards: Vec::new(),
            table: vec![value],
        }
    }

    pub fn from_cpt(cpt: &Cpt, net: &BayesNet) -> Self {
        Self {
            scope: cpt.scope().to_vec(),
            cards: cpt.scope().iter().map(|&v| net.card(v)).collect(),
            table: cpt.table().to_vec(),
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.scope.len()];
        for i in (0..self.scope.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    /// Entry at the instantiation read from `values` (indexed by variable id).
    pub fn value(&self, values: &[usize]) -> f64 {
        let idx: usize = self
            .scope
            .iter()
            .zip(self.strides())
            .map(|(&v, s)| values[v] * s)
            .sum();
        self.table[idx]
    }

    /// Slices `var = value` out of the scope. Unchanged if `var` is absent.
    pub fn restrict(&self, var: VarId, value: usize) -> Self {
        let Some(pos) = self.scope.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let strides = self.strides();
        let outer: usize = self.cards[..pos].iter().product();
        let inner = strides[pos];
        let mut table = Vec::with_capacity(self.table.len() / self.cards[pos]);
        for o in 0..outer {
            let base = o * inner * self.cards[pos] + value * inner;
            table.extend_from_slice(&self.table[base..base + inner]);
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Self { scope, cards, table }
    }
}

// Steps `digits` through the mixed-radix space given by `radix`, last fastest.
// Returns false after the final instantiation.
fn advance(digits: &mut [usize], radix: &[usize]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

fn product_over(functions: &[&TableFunction], scope: &[VarId], cards: &[usize], n: usize) -> TableFunction {
    let size: usize = cards.iter().product();
    let mut table = Vec::with_capacity(size);
    let mut digits = vec![0; scope.len()];
    let mut values = vec![0; n];
    loop {
        for (&v, &d) in scope.iter().zip(&digits) {
            values[v] = d;
        }
        table.push(functions.iter().map(|f| f.value(&values)).product());
        if !advance(&mut digits, cards) {
            break;
        }
    }
    TableFunction {
        scope: scope.to_vec(),
        cards: cards.to_vec(),
        table,
    }
}

fn scope_bound(functions: &[&TableFunction]) -> usize {
    functions
        .iter()
        .flat_map(|f| f.scope.iter())
        .map(|&v| v + 1)
        .max()
        .unwrap_or(0)
}

/// Multiplies `functions` and sums `var` out. The result's scope is the union
/// of the input scopes minus `var`, sorted by id.
pub fn sum_out(functions: &[&TableFunction], var: VarId) -> TableFunction {
    let mut card_of = std::collections::BTreeMap::new();
    for f in functions {
        for (&v, &c) in f.scope.iter().zip(&f.cards) {
            card_of.insert(v, c);
        }
    }
    let var_card = card_of.remove(&var).unwrap_or(1);
    let scope: Vec<VarId> = card_of.keys().copied().collect();
    let cards: Vec<usize> = card_of.values().copied().collect();
    let n = scope_bound(functions).max(var + 1);

    let size: usize = cards.iter().product();
    let mut table = Vec::with_capacity(size);
    let mut digits = vec![0; scope.len()];
    let mut values = vec![0; n];
    loop {
        for (&v, &d) in scope.iter().zip(&digits) {
            values[v] = d;
        }
        let mut sum = 0.0;
        for d in 0..var_card {
            values[var] = d;
            sum += functions.iter().map(|f| f.value(&values)).product::<f64>();
        }
        table.push(sum);
        if !advance(&mut digits, &cards) {
            break;
        }
    }
    TableFunction { scope, cards, table }
}

/// Greedy min-fill order over the moral graph restricted to variables not in
/// `excluded`. Ties go to smaller degree, then smaller id.
pub fn min_fill_order(net: &BayesNet, excluded: &[VarId]) -> Vec<VarId> {
    let n = net.len();
    let mut live = vec![true; n];
    for &v in excluded {
        if v < n {
            live[v] = false;
        }
    }
    let mut adj: Vec<BTreeSet<VarId>> = vec![BTreeSet::new(); n];
    for cpt in net.cpts() {
        let scope = cpt.scope();
        for &x in scope {
            for &y in scope {
                if x != y && live[x] && live[y] {
                    adj[x].insert(y);
                }
            }
        }
    }
    let fill = |adj: &[BTreeSet<VarId>], v: VarId| -> usize {
        let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
        let mut missing = 0;
        for (i, &x) in nbrs.iter().enumerate() {
            for &y in &nbrs[i + 1..] {
                if !adj[x].contains(&y) {
                    missing += 1;
                }
            }
        }
        missing
    };

    let mut order = Vec::new();
    let mut remaining: Vec<VarId> = (0..n).filter(|&v| live[v]).collect();
    while !remaining.is_empty() {
        let (pos, &v) = remaining
            .iter()
            .enumerate()
            .min_by_key(|&(_, &v)| (fill(&adj, v), adj[v].len(), v))
            .unwrap();
        remaining.remove(pos);
        let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
        for &x in &nbrs {
            adj[x].remove(&v);
            for &y in &nbrs {
                if x != y {
                    adj[x].insert(y);
                }
            }
        }
        adj[v].clear();
        order.push(v);
    }
    order
}

fn check_order(net: &BayesNet, query: &Query, order: &[VarId]) -> Result<(), VarElimError> {
    let mut seen = vec![false; net.len()];
    for &v in order {
        if v >= net.len() {
            return Err(VarElimError::OutOfRange { var: v });
        }
        if v == query.query_var || query.is_evidence(v) {
            return Err(VarElimError::Excluded { var: v });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(VarElimError::Repeated { var: v });
        }
    }
    if let Some(v) = (0..net.len()).find(|&v| !seen[v] && v != query.query_var && !query.is_evidence(v)) {
        return Err(VarElimError::Missing { var: v });
    }
    Ok(())
}

fn eliminate(pool: &mut Vec<TableFunction>, var: VarId) -> TableFunction {
    let (touching, rest): (Vec<_>, Vec<_>) = std::mem::take(pool)
        .into_iter()
        .partition(|f| f.scope.contains(&var));
    *pool = rest;
    let refs: Vec<&TableFunction> = touching.iter().collect();
    sum_out(&refs, var)
}

/// Posterior of the query by eliminating `order`, which must list every
/// variable except the query and the evidence exactly once.
pub fn ve_query(net: &BayesNet, query: &Query, order: &[VarId]) -> Result<Posterior, VarElimError> {
    query.check(net)?;
    check_order(net, query, order)?;
    let mut pool: Vec<TableFunction> = net
        .cpts()
        .iter()
        .map(|c| {
            query
                .evidence
                .iter()
                .fold(TableFunction::from_cpt(c, net), |f, e| f.restrict(e.var, e.value))
        })
        .collect();
    for &v in order {
        let g = eliminate(&mut pool, v);
        pool.push(g);
    }
    let q = query.query_var;
    let refs: Vec<&TableFunction> = pool.iter().collect();
    let over_q = product_over(&refs, &[q], &[net.card(q)], scope_bound(&refs).max(q + 1));
    Ok(Posterior::from_masses(&over_q.table))
}

/// The intermediate function produced at each elimination step, without
/// evidence. `order` may be any sequence of distinct variables.
pub fn ve_intermediates(net: &BayesNet, order: &[VarId]) -> Result<Vec<TableFunction>, VarElimError> {
    let mut seen = vec![false; net.len()];
    for &v in order {
        if v >= net.len() {
            return Err(VarElimError::OutOfRange { var: v });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(VarElimError::Repeated { var: v });
        }
    }
    let mut pool: Vec<TableFunction> = net.cpts().iter().map(|c| TableFunction::from_cpt(c, net)).collect();
    let mut out = Vec::with_capacity(order.len());
    for &v in order {
        let g = eliminate(&mut pool, v);
        out.push(g.clone());
        pool.push(g);
    }
    Ok(out)
}
