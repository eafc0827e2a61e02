//! Forward checking, unit propagation and the preprocessing pass.
//!
//! A value is pruned when some CPT whose only unassigned variable is `W`
//! evaluates to zero at that value. Prunings are stamped with the level that
//! caused them and undone with it.

use std::collections::{BTreeSet, VecDeque};

use crate::cache::Nogood;
use crate::engine::state::{CptTracker, Trail};
use crate::model::{Assignment, BayesNet, Query, VarId};

/// Why a value is pruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prune {
    pub level: usize,
    pub cpt: usize,
}

#[derive(Debug, Clone)]
pub struct PruneMarks {
    offsets: Vec<usize>,
    marks: Vec<Option<Prune>>,
    unpruned: Vec<usize>,
    undo: Vec<Vec<Assignment>>,
}

impl PruneMarks {
    pub fn new(cards: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(cards.len() + 1);
        let mut acc = 0;
        for &c in cards {
            offsets.push(acc);
            acc += c;
        }
        offsets.push(acc);
        Self {
            offsets,
            marks: vec![None; acc],
            unpruned: cards.to_vec(),
            undo: Vec::new(),
        }
    }

    #[inline]
    fn slot(&self, a: Assignment) -> usize {
        self.offsets[a.var] + a.value
    }

    pub fn pruned_by(&self, a: Assignment) -> Option<Prune> {
        self.marks[self.slot(a)]
    }

    pub fn is_pruned(&self, a: Assignment) -> bool {
        self.pruned_by(a).is_some()
    }

    pub fn unpruned_count(&self, var: VarId) -> usize {
        self.unpruned[var]
    }

    pub fn unpruned_values(&self, var: VarId) -> impl Iterator<Item = usize> + '_ {
        let card = self.offsets[var + 1] - self.offsets[var];
        (0..card).filter(move |&d| self.marks[self.offsets[var] + d].is_none())
    }

    /// Returns false if the value was already pruned.
    pub fn prune(&mut self, a: Assignment, level: usize, cpt: usize) -> bool {
        let slot = self.slot(a);
        if self.marks[slot].is_some() {
            return false;
        }
        self.marks[slot] = Some(Prune { level, cpt });
        self.unpruned[a.var] -= 1;
        if self.undo.len() <= level {
            self.undo.resize_with(level + 1, Vec::new);
        }
        self.undo[level].push(a);
        true
    }

    pub fn undo_level(&mut self, level: usize) {
        let Some(list) = self.undo.get_mut(level) else {
            return;
        };
        for a in std::mem::take(list) {
            let slot = self.offsets[a.var] + a.value;
            self.marks[slot] = None;
            self.unpruned[a.var] += 1;
        }
    }
}

/// The assignments that justify pruning `a`: the pruning CPT's instantiation.
/// Always contains `a` itself.
pub fn prune_context(net: &BayesNet, trail: &Trail, marks: &PruneMarks, a: Assignment) -> Option<Nogood> {
    let prune = marks.pruned_by(a)?;
    let assignments = net
        .cpt(prune.cpt)
        .scope()
        .iter()
        .map(|&v| {
            if v == a.var {
                a
            } else {
                Assignment::new(v, trail.values()[v].expect("pruning CPT is instantiated"))
            }
        })
        .collect();
    Some(Nogood::new(assignments))
}

/// Conflict for a variable with every value pruned: the union of the pruning
/// contexts with the variable itself removed.
pub fn deadend_context(net: &BayesNet, trail: &Trail, marks: &PruneMarks, var: VarId) -> Nogood {
    let mut set = BTreeSet::new();
    for d in 0..net.card(var) {
        if let Some(ctx) = prune_context(net, trail, marks, Assignment::new(var, d)) {
            set.extend(ctx.assignments.into_iter().filter(|x| x.var != var));
        }
    }
    Nogood::new(set.into_iter().collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FcReport {
    pub pruned: Vec<Assignment>,
    pub forced: Vec<VarId>,
    pub deadends: Vec<VarId>,
}

/// Forward-checks the CPTs containing `var` that now have exactly one
/// unassigned, active variable. Prunings are stamped with `level`.
pub fn forward_check(
    net: &BayesNet,
    trail: &Trail,
    tracker: &CptTracker,
    marks: &mut PruneMarks,
    var: VarId,
    level: usize,
) -> FcReport {
    let mut report = FcReport::default();
    let values = trail.values();
    for &c in tracker.containing(var) {
        if tracker.remaining(c) != 1 {
            continue;
        }
        let cpt = net.cpt(c);
        let w = *cpt
            .scope()
            .iter()
            .find(|&&v| values[v].is_none())
            .expect("one variable remains");
        if trail.is_inactive(w) {
            continue;
        }
        for d in 0..net.card(w) {
            let a = Assignment::new(w, d);
            if marks.is_pruned(a) {
                continue;
            }
            let p = cpt.eval_with(|v| if v == w { d } else { values[v].unwrap() });
            if p == 0.0 && marks.prune(a, level, c) {
                report.pruned.push(a);
            }
        }
        let bucket = match marks.unpruned_count(w) {
            0 => &mut report.deadends,
            1 => &mut report.forced,
            _ => continue,
        };
        if !bucket.contains(&w) {
            bucket.push(w);
        }
    }
    report.forced.retain(|w| marks.unpruned_count(*w) == 1);
    report
}

#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    /// Forced assignments made, in order.
    Consistent(Vec<Assignment>),
    Deadend { var: VarId, context: Nogood },
}

/// Forward-checks `seeds`, then assigns forced variables at `level` in FIFO
/// order until none remain or some variable has no value left. `exclude` is
/// never assigned, though its values may be pruned.
#[allow(clippy::too_many_arguments)]
pub fn propagate_to_fixpoint(
    net: &BayesNet,
    trail: &mut Trail,
    tracker: &mut CptTracker,
    marks: &mut PruneMarks,
    seeds: &[VarId],
    level: usize,
    exclude: Option<VarId>,
) -> Propagation {
    let mut queue = VecDeque::new();
    let mut made = Vec::new();
    let absorb = |report: FcReport, queue: &mut VecDeque<VarId>| -> Option<VarId> {
        if let Some(&w) = report.deadends.first() {
            return Some(w);
        }
        queue.extend(report.forced);
        None
    };
    for &s in seeds {
        let report = forward_check(net, trail, tracker, marks, s, level);
        if let Some(w) = absorb(report, &mut queue) {
            return Propagation::Deadend {
                var: w,
                context: deadend_context(net, trail, marks, w),
            };
        }
    }
    while let Some(w) = queue.pop_front() {
        if !trail.is_active(w) || Some(w) == exclude {
            continue;
        }
        match marks.unpruned_count(w) {
            0 => {
                return Propagation::Deadend {
                    var: w,
                    context: deadend_context(net, trail, marks, w),
                }
            }
            1 => {}
            _ => continue,
        }
        let d = marks.unpruned_values(w).next().unwrap();
        let a = Assignment::new(w, d);
        trail.assign(a, level);
        tracker.assign(w, |_, _| {});
        made.push(a);
        let report = forward_check(net, trail, tracker, marks, w, level);
        if let Some(w) = absorb(report, &mut queue) {
            return Propagation::Deadend {
                var: w,
                context: deadend_context(net, trail, marks, w),
            };
        }
    }
    Propagation::Consistent(made)
}

/// Search state after evidence and level-0 propagation.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub trail: Trail,
    pub tracker: CptTracker,
    pub marks: PruneMarks,
    /// Assignments forced by propagation (not evidence).
    pub forced: Vec<Assignment>,
    /// Product of every CPT fully instantiated at level 0.
    pub prod: f64,
    /// CPTs multiplied into `prod`, in id order.
    pub consumed: Vec<usize>,
}

/// Why preprocessing proved `Pr(E) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contradiction {
    /// A set of level-0 assignments with no positive completion.
    pub context: Nogood,
}

/// Assigns the evidence at level 0 and, when `forward_checking` is on,
/// propagates to a fixpoint without ever assigning the query variable.
pub fn preprocess(
    net: &BayesNet,
    query: &Query,
    forward_checking: bool,
) -> Result<Preprocessed, Contradiction> {
    let mut trail = Trail::new(net.len());
    let mut tracker = CptTracker::new(net);
    let mut marks = PruneMarks::new(&net.cards());
    for &e in &query.evidence {
        trail.assign(e, 0);
        tracker.assign(e.var, |_, _| {});
    }
    let mut forced = Vec::new();
    if forward_checking {
        let seeds: Vec<VarId> = (0..net.len()).collect();
        match propagate_to_fixpoint(
            net,
            &mut trail,
            &mut tracker,
            &mut marks,
            &seeds,
            0,
            Some(query.query_var),
        ) {
            Propagation::Consistent(made) => forced = made,
            Propagation::Deadend { context, .. } => return Err(Contradiction { context }),
        }
    }
    let mut prod = 1.0;
    let mut consumed = Vec::new();
    for (c, cpt) in net.cpts().iter().enumerate() {
        if tracker.remaining(c) == 0 {
            let p = cpt.eval_with(|v| trail.values()[v].unwrap());
            if p == 0.0 {
                let context = Nogood::new(
                    cpt.scope()
                        .iter()
                        .map(|&v| Assignment::new(v, trail.values()[v].unwrap()))
                        .collect(),
                );
                return Err(Contradiction { context });
            }
            prod *= p;
            consumed.push(c);
        }
    }
    Ok(Preprocessed {
        trail,
        tracker,
        marks,
        forced,
        prod,
        consumed,
    })
}
