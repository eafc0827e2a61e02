//! Trail and CPT bookkeeping shared by the search modes and propagation.

use crate::cache::TrailView;
use crate::model::{Assignment, BayesNet, VarId};

/// Assignments in trail order, each stamped with its decision level.
///
/// Level 0 holds evidence and anything forced by preprocessing. Each deeper
/// level holds exactly one assignment. A variable is active when it is
/// neither assigned nor marked inactive.
#[derive(Debug, Clone)]
pub struct Trail {
    values: Vec<Option<usize>>,
    levels: Vec<Option<usize>>,
    stack: Vec<(Assignment, usize)>,
    inactive: Vec<Option<usize>>,
    marks: Vec<Vec<VarId>>,
}

impl Trail {
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![None; n],
            levels: vec![None; n],
            stack: Vec::new(),
            inactive: vec![None; n],
            marks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    pub fn assignments(&self) -> impl Iterator<Item = Assignment> + '_ {
        self.stack.iter().map(|&(a, _)| a)
    }

    pub fn is_assigned(&self, var: VarId) -> bool {
        self.values[var].is_some()
    }

    pub fn is_inactive(&self, var: VarId) -> bool {
        self.inactive[var].is_some()
    }

    pub fn is_active(&self, var: VarId) -> bool {
        self.values[var].is_none() && self.inactive[var].is_none()
    }

    pub fn assign(&mut self, a: Assignment, level: usize) {
        debug_assert!(self.is_active(a.var), "assigning inactive or assigned {a}");
        debug_assert!(self.stack.last().is_none_or(|&(_, l)| l <= level));
        self.values[a.var] = Some(a.value);
        self.levels[a.var] = Some(level);
        self.stack.push((a, level));
    }

    pub fn unassign_last(&mut self) -> Option<(Assignment, usize)> {
        let (a, level) = self.stack.pop()?;
        self.values[a.var] = None;
        self.levels[a.var] = None;
        Some((a, level))
    }

    /// Marks `var` inactive until the marks of `level` are cleared.
    pub fn mark_inactive(&mut self, var: VarId, level: usize) {
        debug_assert!(self.is_active(var), "variable {var} already unavailable");
        if self.marks.len() <= level {
            self.marks.resize_with(level + 1, Vec::new);
        }
        self.inactive[var] = Some(level);
        self.marks[level].push(var);
    }

    pub fn unmark_level(&mut self, level: usize) {
        if let Some(list) = self.marks.get_mut(level) {
            for v in list.drain(..) {
                if self.inactive[v] == Some(level) {
                    self.inactive[v] = None;
                }
            }
        }
    }

    /// Deepest level among the assignments to `vars`, or 0 for none.
    pub fn deepest_level(&self, vars: impl IntoIterator<Item = VarId>) -> usize {
        vars.into_iter()
            .map(|v| self.levels[v].expect("dependency on an unassigned variable"))
            .max()
            .unwrap_or(0)
    }
}

impl TrailView for Trail {
    fn value(&self, var: VarId) -> Option<usize> {
        self.values[var]
    }

    fn level(&self, var: VarId) -> Option<usize> {
        self.levels[var]
    }
}

/// Per-CPT count of unassigned variables.
#[derive(Debug, Clone)]
pub struct CptTracker {
    remaining: Vec<usize>,
    containing: Vec<Vec<usize>>,
}

impl CptTracker {
    pub fn new(net: &BayesNet) -> Self {
        Self {
            remaining: net.cpts().iter().map(|c| c.scope().len()).collect(),
            containing: net.cpts_containing(),
        }
    }

    pub fn remaining(&self, cpt: usize) -> usize {
        self.remaining[cpt]
    }

    /// CPTs whose scope contains `var`, in id order.
    pub fn containing(&self, var: VarId) -> &[usize] {
        &self.containing[var]
    }

    /// Records the assignment of `var`; `on_change(cpt, remaining)` sees every
    /// affected CPT in id order.
    pub fn assign(&mut self, var: VarId, mut on_change: impl FnMut(usize, usize)) {
        for &c in &self.containing[var] {
            self.remaining[c] -= 1;
            on_change(c, self.remaining[c]);
        }
    }

    pub fn unassign(&mut self, var: VarId) {
        for &c in &self.containing[var] {
            self.remaining[c] += 1;
        }
    }
}
