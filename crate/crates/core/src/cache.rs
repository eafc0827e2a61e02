//! Factor ("good") cache and nogood store.
//!
//! Both structures are indexed by watched assignments so that detecting a
//! newly usable factor or a blocking nogood costs time proportional to watch
//! list traffic, not to the number of stored entries.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::model::{Assignment, BayesNet, VarId};

/// Values compared on merge must agree to this relative tolerance.
pub const MERGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CacheError {
    #[error("dset assigns variable {var} twice")]
    DuplicateVar { var: VarId },
    #[error("variable {var} is in both dset and sset")]
    Overlap { var: VarId },
    #[error("factor value {val} is negative or not finite")]
    BadValue { val: f64 },
    #[error("cached factor value {cached} disagrees with recomputed {computed}")]
    Inconsistent { cached: f64, computed: f64 },
    #[error("expected one nogood per value of variable {var} ({expected}), got {found}")]
    Coverage { var: VarId, expected: usize, found: usize },
    #[error("nogood for value {value} of variable {var} assigns it a different value")]
    WrongValue { var: VarId, value: usize },
}

/// Read access to the current search trail.
pub trait TrailView {
    fn value(&self, var: VarId) -> Option<usize>;
    /// Decision level of an assigned variable.
    fn level(&self, var: VarId) -> Option<usize>;

    fn satisfies(&self, a: Assignment) -> bool {
        self.value(a.var) == Some(a.value)
    }
}

/// A cached partial sum: under the `dset` assignments, summing the joint over
/// the `sset` variables yields `val` times a function of the other variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    /// Sorted by variable id.
    pub dset: Vec<Assignment>,
    /// Sorted, disjoint from the dset variables.
    pub sset: Vec<VarId>,
    pub val: f64,
}

impl Factor {
    pub fn new(mut dset: Vec<Assignment>, mut sset: Vec<VarId>, val: f64) -> Result<Self, CacheError> {
        dset.sort_unstable();
        sset.sort_unstable();
        sset.dedup();
        if let Some(w) = dset.windows(2).find(|w| w[0].var == w[1].var) {
            return Err(CacheError::DuplicateVar { var: w[0].var });
        }
        if let Some(&s) = sset.iter().find(|&&s| dset.iter().any(|a| a.var == s)) {
            return Err(CacheError::Overlap { var: s });
        }
        if !(val >= 0.0 && val.is_finite()) {
            return Err(CacheError::BadValue { val });
        }
        Ok(Self { dset, sset, val })
    }
}

impl fmt::Display for Factor {
    /// `Dset | Sset | Val`, e.g. `v1=0 | v2 | 1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dset: Vec<String> = self.dset.iter().map(|a| a.to_string()).collect();
        let sset: Vec<String> = self.sset.iter().map(|v| format!("v{v}")).collect();
        write!(f, "{} | {} | {:?}", dset.join(" "), sset.join(" "), self.val)
    }
}

/// A set of assignments every completion of which has probability zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Nogood {
    /// Sorted by variable id, at most one per variable.
    pub assignments: Vec<Assignment>,
}

impl Nogood {
    pub fn new(mut assignments: Vec<Assignment>) -> Self {
        assignments.sort_unstable();
        assignments.dedup();
        Self { assignments }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn mentions(&self, var: VarId) -> bool {
        self.assignments.iter().any(|a| a.var == var)
    }
}

/// Index of an entry in a [`FactorCache`]; valid until the next insertion.
pub type FactorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Stored,
    Merged,
}

#[derive(Debug, Clone)]
struct Entry {
    factor: Factor,
    watch: Option<Assignment>,
    seq: u64,
}

fn value_offsets(cards: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(cards.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for &c in cards {
        acc += c;
        offsets.push(acc);
    }
    offsets
}

/// Factor store with one watched dset assignment per factor.
///
/// A factor sits on the watch list of one dset assignment that is currently
/// unsatisfied, or, when every dset assignment holds, on the list of the one
/// made most recently. When the watched assignment is made, the watch moves to
/// another unsatisfied assignment if there is one; otherwise the factor has
/// just become fully instantiated and is reported if its subsumed variables
/// are still free.
#[derive(Debug, Clone)]
pub struct FactorCache {
    entries: Vec<Entry>,
    index: HashMap<(Vec<Assignment>, Vec<VarId>), FactorId>,
    watches: Vec<Vec<FactorId>>,
    offsets: Vec<usize>,
    budget: Option<usize>,
    purge_count: u64,
    next_seq: u64,
}

impl FactorCache {
    /// `budget = None` means unbounded.
    pub fn new(cards: &[usize], budget: Option<usize>) -> Self {
        let offsets = value_offsets(cards);
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            watches: vec![Vec::new(); *offsets.last().unwrap()],
            offsets,
            budget,
            purge_count: 0,
            next_seq: 0,
        }
    }

    pub fn for_net(net: &BayesNet, budget: Option<usize>) -> Self {
        Self::new(&net.cards(), budget)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn purge_count(&self) -> u64 {
        self.purge_count
    }

    pub fn factor(&self, id: FactorId) -> &Factor {
        &self.entries[id].factor
    }

    pub fn factors(&self) -> impl Iterator<Item = &Factor> {
        self.entries.iter().map(|e| &e.factor)
    }

    #[inline]
    fn slot(&self, a: Assignment) -> usize {
        self.offsets[a.var] + a.value
    }

    fn choose_watch(factor: &Factor, trail: &dyn TrailView) -> Option<Assignment> {
        if let Some(&a) = factor.dset.iter().find(|&&a| !trail.satisfies(a)) {
            return Some(a);
        }
        factor
            .dset
            .iter()
            .copied()
            .max_by_key(|a| (trail.level(a.var).unwrap_or(0), a.var))
    }

    /// Stores `factor`, or keeps the existing entry with the same dset and
    /// sset. Purges when the budget is exceeded.
    pub fn cache_factor(
        &mut self,
        factor: Factor,
        trail: &dyn TrailView,
    ) -> Result<CacheOutcome, CacheError> {
        let key = (factor.dset.clone(), factor.sset.clone());
        if let Some(&id) = self.index.get(&key) {
            let cached = self.entries[id].factor.val;
            if (cached - factor.val).abs() > MERGE_TOLERANCE * cached.abs().max(1.0) {
                return Err(CacheError::Inconsistent {
                    cached,
                    computed: factor.val,
                });
            }
            return Ok(CacheOutcome::Merged);
        }
        let watch = Self::choose_watch(&factor, trail);
        let id = self.entries.len();
        if let Some(w) = watch {
            let slot = self.slot(w);
            self.watches[slot].push(id);
        }
        self.entries.push(Entry {
            factor,
            watch,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        self.index.insert(key, id);
        if self.budget.is_some_and(|b| self.entries.len() > b) {
            self.purge();
        }
        Ok(CacheOutcome::Stored)
    }

    /// Factors whose dset has just been completed by `just` and whose sset
    /// variables all satisfy `is_free`, in insertion order.
    ///
    /// `trail` must already contain `just`.
    pub fn activated_factors(
        &mut self,
        just: Assignment,
        trail: &dyn TrailView,
        is_free: impl Fn(VarId) -> bool,
    ) -> Vec<FactorId> {
        let slot = self.slot(just);
        let list = std::mem::take(&mut self.watches[slot]);
        let mut keep = Vec::with_capacity(list.len());
        let mut hits = Vec::new();
        for id in list {
            let entry = &self.entries[id];
            let replacement = entry
                .factor
                .dset
                .iter()
                .copied()
                .find(|&a| a != just && !trail.satisfies(a));
            match replacement {
                Some(a) => {
                    self.entries[id].watch = Some(a);
                    let s = self.slot(a);
                    self.watches[s].push(id);
                }
                None => {
                    keep.push(id);
                    if entry.factor.sset.iter().all(|&v| is_free(v)) {
                        hits.push(id);
                    }
                }
            }
        }
        // a factor moved onto its own slot cannot happen: `a != just`
        self.watches[slot] = keep;
        hits.sort_by_key(|&id| self.entries[id].seq);
        hits
    }

    /// Evicts the worse half (rounded up) of the cache, ranking factors by
    /// smaller dset, then larger sset, then earlier insertion.
    pub fn purge(&mut self) -> usize {
        let size = self.entries.len();
        if size == 0 {
            return 0;
        }
        let evict = size.div_ceil(2);
        let mut entries = std::mem::take(&mut self.entries);
        entries.sort_by(|a, b| {
            a.factor
                .dset
                .len()
                .cmp(&b.factor.dset.len())
                .then(b.factor.sset.len().cmp(&a.factor.sset.len()))
                .then(a.seq.cmp(&b.seq))
        });
        entries.truncate(size - evict);
        entries.sort_by_key(|e| e.seq);

        self.index.clear();
        for list in &mut self.watches {
            list.clear();
        }
        for (id, e) in entries.iter().enumerate() {
            self.index
                .insert((e.factor.dset.clone(), e.factor.sset.clone()), id);
            if let Some(w) = e.watch {
                let s = self.offsets[w.var] + w.value;
                self.watches[s].push(id);
            }
        }
        self.entries = entries;
        self.purge_count += 1;
        evict
    }

    /// One factor per line as `Dset | Sset | Val`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.factor.to_string());
            out.push('\n');
        }
        out
    }
}

/// Resolves one nogood per value of `var` into a nogood without `var`.
///
/// `per_value[d]` must either contain `var = d` or not mention `var` at all.
pub fn learn_nogood(
    per_value: &[Nogood],
    var: VarId,
    card: usize,
) -> Result<Nogood, CacheError> {
    if per_value.len() != card {
        return Err(CacheError::Coverage {
            var,
            expected: card,
            found: per_value.len(),
        });
    }
    let mut union: Vec<Assignment> = Vec::new();
    for (d, ng) in per_value.iter().enumerate() {
        for &a in &ng.assignments {
            if a.var == var {
                if a.value != d {
                    return Err(CacheError::WrongValue { var, value: d });
                }
            } else {
                union.push(a);
            }
        }
    }
    union.sort_unstable();
    union.dedup();
    if let Some(w) = union.windows(2).find(|w| w[0].var == w[1].var) {
        return Err(CacheError::DuplicateVar { var: w[0].var });
    }
    Ok(Nogood { assignments: union })
}

/// Nogoods with two watched assignments each (one for unit nogoods).
#[derive(Debug, Clone)]
pub struct NogoodStore {
    nogoods: Vec<Nogood>,
    watched: Vec<[Option<Assignment>; 2]>,
    watches: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    has_empty: bool,
}

impl NogoodStore {
    pub fn new(cards: &[usize]) -> Self {
        let offsets = value_offsets(cards);
        Self {
            nogoods: Vec::new(),
            watched: Vec::new(),
            watches: vec![Vec::new(); *offsets.last().unwrap()],
            offsets,
            has_empty: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nogoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nogoods.is_empty()
    }

    pub fn nogoods(&self) -> &[Nogood] {
        &self.nogoods
    }

    pub fn get(&self, id: usize) -> &Nogood {
        &self.nogoods[id]
    }

    #[inline]
    fn slot(&self, a: Assignment) -> usize {
        self.offsets[a.var] + a.value
    }

    /// Adds a nogood, watching its unsatisfied assignments first and otherwise
    /// the most recently made ones.
    pub fn add(&mut self, nogood: Nogood, trail: &dyn TrailView) -> usize {
        let id = self.nogoods.len();
        if nogood.is_empty() {
            self.has_empty = true;
        }
        let mut ranked = nogood.assignments.clone();
        ranked.sort_by_key(|&a| {
            let sat = trail.satisfies(a);
            (sat, std::cmp::Reverse(trail.level(a.var).unwrap_or(0)), a.var)
        });
        let pair = [ranked.first().copied(), ranked.get(1).copied()];
        for w in pair.iter().flatten() {
            let s = self.slot(*w);
            self.watches[s].push(id);
        }
        self.nogoods.push(nogood);
        self.watched.push(pair);
        id
    }

    /// Resolves `per_value` into a new nogood and stores it.
    pub fn learn(
        &mut self,
        per_value: &[Nogood],
        var: VarId,
        card: usize,
        trail: &dyn TrailView,
    ) -> Result<(usize, Nogood), CacheError> {
        let learned = learn_nogood(per_value, var, card)?;
        let id = self.add(learned.clone(), trail);
        Ok((id, learned))
    }

    /// Moves watches off an assignment that was just made. Must be called for
    /// every assignment pushed on the trail.
    pub fn on_assigned(&mut self, just: Assignment, trail: &dyn TrailView) {
        let slot = self.slot(just);
        let list = std::mem::take(&mut self.watches[slot]);
        let mut keep = Vec::with_capacity(list.len());
        for id in list {
            let [w0, w1] = self.watched[id];
            let (me, other) = if w0 == Some(just) { (0, w1) } else { (1, w0) };
            let Some(other) = other else {
                keep.push(id);
                continue;
            };
            let replacement = self.nogoods[id]
                .assignments
                .iter()
                .copied()
                .find(|&a| a != just && a != other && !trail.satisfies(a));
            match replacement {
                Some(a) => {
                    self.watched[id][me] = Some(a);
                    let s = self.slot(a);
                    self.watches[s].push(id);
                }
                None => keep.push(id),
            }
        }
        self.watches[slot] = keep;
    }

    /// The id of a stored nogood contained in `trail ∪ {candidate}`, if any.
    pub fn blocks(&self, candidate: Assignment, trail: &dyn TrailView) -> Option<usize> {
        if self.has_empty {
            return self.nogoods.iter().position(Nogood::is_empty);
        }
        self.watches[self.slot(candidate)].iter().copied().find(|&id| {
            self.nogoods[id]
                .assignments
                .iter()
                .all(|&a| a == candidate || trail.satisfies(a))
        })
    }
}

/// Whether a nogood blocks `candidate` under `trail`.
pub fn nogood_blocks(store: &NogoodStore, trail: &dyn TrailView, candidate: Assignment) -> bool {
    store.blocks(candidate, trail).is_some()
}
