use std::collections::BTreeSet;
use std::time::Instant;

use crate::cache::{CacheOutcome, Factor, FactorCache, Nogood, NogoodStore};
use crate::model::{Assignment, BayesNet, Query, VarId};
use crate::propagate::{forward_check, prune_context, Preprocessed, PruneMarks};

use super::state::{CptTracker, Trail};
use super::{EngineConfig, EngineError, Heuristic, Mode, Ordering, Stats, Trace, TracedFactor};

const CLOCK_INTERVAL: u64 = 1 << 12;

#[derive(Debug, Clone)]
struct Frame {
    prod: f64,
    dset: BTreeSet<Assignment>,
    sset: BTreeSet<VarId>,
}

impl Frame {
    fn new(prod: f64) -> Self {
        Self {
            prod,
            dset: BTreeSet::new(),
            sset: BTreeSet::new(),
        }
    }
}

enum Flow {
    Done,
    /// Every completion of `nogood` has probability zero; unwind to `target`.
    Backjump { nogood: Nogood, target: usize },
}

/// One run of the depth-first search. Level 0 holds evidence; the query is
/// branched at level 1.
pub struct Search<'a> {
    net: &'a BayesNet,
    query: &'a Query,
    mode: Mode,
    order: Vec<VarId>,
    dynamic: Option<Option<Heuristic>>,
    fc: bool,
    learn: bool,
    trail: Trail,
    tracker: CptTracker,
    marks: PruneMarks,
    cache: Option<FactorCache>,
    nogoods: NogoodStore,
    frames: Vec<Frame>,
    query_prods: Vec<f64>,
    stats: Stats,
    trace: Option<Trace>,
    start: Instant,
    config: &'a EngineConfig,
}

impl<'a> Search<'a> {
    pub fn new(
        net: &'a BayesNet,
        query: &'a Query,
        config: &'a EngineConfig,
        order: Vec<VarId>,
        pre: Preprocessed,
        start: Instant,
    ) -> Self {
        let enumerate = config.mode == Mode::GenAndSum;
        let cache = (config.mode == Mode::ValueElim).then(|| FactorCache::for_net(net, config.cache_budget));
        let dynamic = match &config.ordering {
            Ordering::Dynamic(h) => Some(*h),
            _ => None,
        };
        Self {
            net,
            query,
            mode: config.mode,
            order,
            dynamic,
            fc: config.forward_checking && !enumerate,
            learn: config.nogoods && !enumerate,
            trail: pre.trail,
            tracker: pre.tracker,
            marks: pre.marks,
            cache,
            nogoods: NogoodStore::new(&net.cards()),
            frames: vec![Frame::new(pre.prod)],
            query_prods: vec![0.0; net.card(query.query_var)],
            stats: Stats::default(),
            trace: config.trace.then(Trace::default),
            start,
            config,
        }
    }

    /// Returns the unnormalized masses `Pr(Q=d ∧ E)`.
    pub fn run(&mut self) -> Result<Vec<f64>, EngineError> {
        match self.level(1)? {
            Flow::Done => {
                let prod0 = self.frames[0].prod;
                Ok(self.query_prods.iter().map(|p| p * prod0).collect())
            }
            Flow::Backjump { .. } => Ok(vec![0.0; self.query_prods.len()]),
        }
    }

    pub fn into_parts(mut self) -> (Stats, Trace) {
        if let Some(cache) = &self.cache {
            self.stats.purges = cache.purge_count();
        }
        (self.stats, self.trace.unwrap_or_default())
    }

    fn select(&self, level: usize) -> Option<VarId> {
        if level == 1 {
            return Some(self.query.query_var);
        }
        let trail = &self.trail;
        let mut active = self.order.iter().copied().filter(|&v| trail.is_active(v));
        let Some(heuristic) = self.dynamic else {
            return active.next();
        };
        if self.fc {
            let count = |v: &VarId| self.marks.unpruned_count(*v);
            let candidates = self.order.iter().filter(|&&v| trail.is_active(v));
            if let Some(&v) = candidates.clone().find(|v| count(v) == 0) {
                return Some(v);
            }
            if let Some(&v) = candidates.clone().find(|v| count(v) == 1) {
                return Some(v);
            }
        }
        match heuristic {
            Some(h) => {
                let candidates: Vec<VarId> = active.collect();
                if candidates.is_empty() {
                    None
                } else {
                    h(self.net, &candidates).or(candidates.first().copied())
                }
            }
            None => active.next(),
        }
    }

    fn visit(&mut self) -> Result<(), EngineError> {
        self.stats.nodes += 1;
        if let Some(limit) = self.config.node_limit {
            if self.stats.nodes > limit {
                return Err(EngineError::NodeLimit { limit });
            }
        }
        if let Some(timeout) = self.config.timeout {
            if self.stats.nodes.is_multiple_of(CLOCK_INTERVAL) {
                let elapsed = self.start.elapsed();
                if elapsed > timeout {
                    return Err(EngineError::Timeout { elapsed });
                }
            }
        }
        Ok(())
    }

    fn trail_with(&self, extra: Option<Assignment>) -> Vec<Assignment> {
        self.trail.assignments().chain(extra).collect()
    }

    /// Assigns `a` at `level`, multiplies newly instantiated CPTs into the
    /// frame, and returns the first CPT that evaluated to zero.
    fn assign(&mut self, a: Assignment, level: usize) -> Option<usize> {
        self.trail.assign(a, level);
        if self.learn {
            self.nogoods.on_assigned(a, &self.trail);
        }
        let mut complete = Vec::new();
        self.tracker.assign(a.var, |c, remaining| {
            if remaining == 0 {
                complete.push(c);
            }
        });
        let mut zero = None;
        let values = self.trail.values();
        let frame = &mut self.frames[level];
        for c in complete {
            let cpt = self.net.cpt(c);
            let p = cpt.eval_with(|v| values[v].unwrap());
            self.stats.cpt_evals += 1;
            frame.prod *= p;
            frame
                .dset
                .extend(cpt.scope().iter().map(|&v| Assignment::new(v, values[v].unwrap())));
            if p == 0.0 && zero.is_none() {
                zero = Some(c);
            }
        }
        zero
    }

    fn consume_factors(&mut self, a: Assignment, level: usize) {
        let Some(cache) = self.cache.as_mut() else {
            return;
        };
        let trail = &mut self.trail;
        let hits = cache.activated_factors(a, trail, |u| trail.is_active(u));
        let frame = &mut self.frames[level];
        if frame.prod == 0.0 {
            return;
        }
        for id in hits {
            let f = cache.factor(id);
            // an earlier factor may have subsumed part of this one
            if !f.sset.iter().all(|&u| trail.is_active(u)) {
                continue;
            }
            frame.prod *= f.val;
            frame.dset.extend(f.dset.iter().copied());
            frame.sset.extend(f.sset.iter().copied());
            for &u in &f.sset {
                trail.mark_inactive(u, level);
            }
            self.stats.cache_hits += 1;
        }
    }

    fn undo(&mut self, a: Assignment, level: usize) {
        let popped = self.trail.unassign_last();
        debug_assert_eq!(popped, Some((a, level)));
        self.tracker.unassign(a.var);
        self.marks.undo_level(level);
        self.trail.unmark_level(level);
    }

    fn level(&mut self, level: usize) -> Result<Flow, EngineError> {
        let Some(var) = self.select(level) else {
            return Ok(Flow::Done);
        };
        self.frames.truncate(level);
        self.frames.push(Frame::new(1.0));
        let card = self.net.card(var);
        let mut conflicts: Vec<Option<Nogood>> = vec![None; card];
        let mut sum = 0.0;

        for d in 0..card {
            self.frames[level].prod = 1.0;
            let a = Assignment::new(var, d);
            if self.fc && self.marks.is_pruned(a) {
                let ctx = prune_context(self.net, &self.trail, &self.marks, a).unwrap();
                if self.trace.is_some() {
                    let t = self.trail_with(Some(a));
                    if let Some(trace) = self.trace.as_mut() {
                        trace.pruned.push(t);
                    }
                }
                self.frames[level].dset.extend(ctx.assignments.iter().copied());
                conflicts[d] = Some(ctx);
                self.frames[level].prod = 0.0;
                if level == 1 {
                    self.query_prods[d] = 0.0;
                }
                continue;
            }
            if self.learn {
                if let Some(id) = self.nogoods.blocks(a, &self.trail) {
                    let ng = self.nogoods.get(id).clone();
                    self.frames[level].dset.extend(ng.assignments.iter().copied());
                    conflicts[d] = Some(ng);
                    self.frames[level].prod = 0.0;
                    if level == 1 {
                        self.query_prods[d] = 0.0;
                    }
                    continue;
                }
            }

            self.visit()?;
            let zero_cpt = self.assign(a, level);
            self.consume_factors(a, level);
            if self.fc {
                forward_check(self.net, &self.trail, &self.tracker, &mut self.marks, var, level);
            }

            if self.frames[level].prod != 0.0 || self.mode == Mode::GenAndSum {
                match self.level(level + 1)? {
                    Flow::Done => {}
                    Flow::Backjump { nogood, target } if target == level => {
                        self.frames[level].prod = 0.0;
                        self.frames[level].dset.extend(nogood.assignments.iter().copied());
                        conflicts[d] = Some(nogood);
                    }
                    jump => {
                        self.undo(a, level);
                        self.frames.truncate(level);
                        return Ok(jump);
                    }
                }
            } else {
                if self.trace.is_some() {
                    let t = self.trail_with(None);
                    if let Some(trace) = self.trace.as_mut() {
                        trace.skipped.push(t);
                    }
                }
                if let Some(c) = zero_cpt {
                    let values = self.trail.values();
                    conflicts[d] = Some(Nogood::new(
                        self.net
                            .cpt(c)
                            .scope()
                            .iter()
                            .map(|&v| Assignment::new(v, values[v].unwrap()))
                            .collect(),
                    ));
                }
            }

            let prod = self.frames[level].prod;
            if level == 1 {
                self.query_prods[d] = prod;
            }
            sum += prod;
            self.undo(a, level);
        }

        let mut frame = self.frames.pop().expect("frame for this level");
        if level == 1 {
            return Ok(Flow::Done);
        }
        frame.dset.retain(|a| a.var != var);
        frame.sset.insert(var);

        if self.learn && sum == 0.0 && conflicts.iter().all(Option::is_some) {
            let per_value: Vec<Nogood> = conflicts.into_iter().map(Option::unwrap).collect();
            let (_, learned) = self.nogoods.learn(&per_value, var, card, &self.trail)?;
            self.stats.nogoods += 1;
            let target = self.trail.deepest_level(learned.assignments.iter().map(|a| a.var));
            if target + 1 < level {
                self.stats.backjumps += 1;
            }
            if let Some(t) = self.trace.as_mut() {
                t.nogoods.push(learned.clone());
            }
            return Ok(Flow::Backjump { nogood: learned, target });
        }

        if self.mode != Mode::ValueElim {
            self.frames[level - 1].prod *= sum;
            return Ok(Flow::Done);
        }

        let push_level = self.trail.deepest_level(frame.dset.iter().map(|a| a.var));
        let factor = Factor::new(
            frame.dset.iter().copied().collect(),
            frame.sset.iter().copied().collect(),
            sum,
        )?;
        if let Some(t) = self.trace.as_mut() {
            t.factors.push(TracedFactor {
                var,
                factor: factor.clone(),
            });
        }
        let cache = self.cache.as_mut().expect("value elimination keeps a cache");
        if cache.cache_factor(factor, &self.trail)? == CacheOutcome::Stored {
            self.stats.factors_cached += 1;
        }
        // a zero value makes every level between here and the pushback moot
        let zero = (sum == 0.0).then(|| Nogood::new(frame.dset.iter().copied().collect()));
        let target = &mut self.frames[push_level];
        target.prod *= sum;
        target.dset.extend(frame.dset);
        for &s in &frame.sset {
            self.trail.mark_inactive(s, push_level);
        }
        self.frames[push_level].sset.extend(frame.sset);
        Ok(match zero {
            Some(nogood) => Flow::Backjump {
                nogood,
                target: push_level,
            },
            None => Flow::Done,
        })
    }
}
