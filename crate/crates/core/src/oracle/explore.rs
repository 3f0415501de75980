// SPDX-License-Identifier: Apache-2.0

//! Interleaving exploration: plain depth-first enumeration over scheduler
//! choices, an optional dynamic partial-order reduced variant, and seeded
//! random sampling.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::machine::{Bounds, Event, EventKind, Machine, Op, State, ThreadId, Trace, TraceStatus};
use crate::ir::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every scheduler choice at every visible operation.
    #[default]
    Dfs,
    /// Explores one interleaving per equivalence class of dependent
    /// operations. Yields the same set of race pairs as `Dfs`.
    Dpor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    pub traces: usize,
    pub bounded: usize,
    pub deadlocked: usize,
    pub faulted: usize,
    /// Branch alternatives cut by the loop bound, summed over traces.
    pub pruned_branches: usize,
    /// The trace cap was hit before the search finished.
    pub truncated: bool,
}

impl ExploreStats {
    fn record(&mut self, t: &Trace, pruned: usize) {
        self.traces += 1;
        self.pruned_branches += pruned;
        match t.status {
            TraceStatus::Bounded => self.bounded += 1,
            TraceStatus::Deadlock => self.deadlocked += 1,
            TraceStatus::Fault => self.faulted += 1,
            TraceStatus::Terminated => {}
        }
    }
}

fn finish(s: &State, events: &[Event], stats: &mut ExploreStats, visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>) -> ControlFlow<()> {
    let t = Trace { events: events.to_vec(), status: s.status(), threads: s.thread_count() };
    stats.record(&t, s.pruned);
    visit(&t)
}

/// Enumerate maximal traces in a deterministic order. `visit` may stop the
/// search early by returning `Break`.
pub fn enumerate_traces(
    p: &Program,
    bounds: Bounds,
    strategy: Strategy,
    visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>,
) -> ExploreStats {
    let m = Machine::new(p, bounds);
    let mut stats = ExploreStats::default();
    for root in m.initial() {
        let flow = match strategy {
            Strategy::Dfs => dfs(&m, root, &mut stats, visit),
            Strategy::Dpor => dpor(&m, root, &mut stats, visit),
        };
        if flow.is_break() {
            break;
        }
    }
    stats
}

/// Collect all traces into a vector. Convenience for tests and small inputs.
pub fn all_traces(p: &Program, bounds: Bounds, strategy: Strategy) -> (Vec<Trace>, ExploreStats) {
    let mut out = Vec::new();
    let stats = enumerate_traces(p, bounds, strategy, &mut |t| {
        out.push(t.clone());
        ControlFlow::Continue(())
    });
    (out, stats)
}

struct DfsNode {
    /// Remaining (thread, successor) pairs to explore from this node.
    pending: Vec<(Event, State)>,
}

fn expand(m: &Machine, s: &State) -> Vec<(Event, State)> {
    let mut out = Vec::new();
    for t in m.enabled_threads(s) {
        let (e, succs) = m.step(s, t);
        out.extend(succs.into_iter().map(|n| (e, n)));
    }
    out.reverse();
    out
}

fn dfs(m: &Machine, root: State, stats: &mut ExploreStats, visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>) -> ControlFlow<()> {
    let mut events: Vec<Event> = Vec::new();
    let mut stack: Vec<DfsNode> = Vec::new();
    let mut current = Some(root);
    loop {
        if let Some(mut s) = current.take() {
            if stats.traces >= m.bounds.max_traces {
                stats.truncated = true;
                return ControlFlow::Break(());
            }
            let pending = if events.len() >= m.bounds.max_events {
                s.mark_bounded();
                Vec::new()
            } else {
                expand(m, &s)
            };
            if pending.is_empty() {
                finish(&s, &events, stats, visit)?;
            } else {
                stack.push(DfsNode { pending });
            }
        }
        // Pop exhausted nodes, then take the next pending child.
        loop {
            let Some(top) = stack.last_mut() else { return ControlFlow::Continue(()) };
            if let Some((e, n)) = top.pending.pop() {
                // `events` holds one event per node strictly above the root.
                events.truncate(stack.len() - 1);
                events.push(e);
                current = Some(n);
                break;
            }
            stack.pop();
        }
    }
}

/// Two operations do not commute.
fn dependent(a: &Op, ta: ThreadId, b: &Op, tb: ThreadId) -> bool {
    if ta == tb {
        return true;
    }
    match (a, b) {
        (Op::Read(x), Op::Write(y)) | (Op::Write(x), Op::Read(y)) | (Op::Write(x), Op::Write(y)) => x == y,
        (Op::Lock(x) | Op::Unlock(x), Op::Lock(y) | Op::Unlock(y)) => x == y,
        // Thread ids are assigned in creation order.
        (Op::Create(_), Op::Create(_)) => true,
        _ => false,
    }
}

struct DporNode {
    state: State,
    /// Clock of each thread: for every thread u, one past the stack position
    /// of the last transition of u that happens before the thread's next one.
    clocks: Vec<Vec<usize>>,
    backtrack: BTreeSet<ThreadId>,
    done: BTreeSet<ThreadId>,
    /// Threads whose next transition was already covered from an equivalent
    /// ordering.
    sleep: BTreeSet<ThreadId>,
    /// Alternative successors of the transition currently being explored.
    variants: Vec<State>,
    cur: Option<(ThreadId, Event, Op)>,
}

struct Transition {
    thread: ThreadId,
    op: Op,
    clock: Vec<usize>,
}

fn get(v: &[usize], i: usize) -> usize {
    v.get(i).copied().unwrap_or(0)
}

fn join(a: &mut Vec<usize>, b: &[usize]) {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x = (*x).max(*y);
    }
}

fn dpor(m: &Machine, root: State, stats: &mut ExploreStats, visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>) -> ControlFlow<()> {
    let mut events: Vec<Event> = Vec::new();
    let mut trans: Vec<Transition> = Vec::new();
    let mut stack: Vec<DporNode> = Vec::new();
    let mut fresh = Some(DporNode {
        clocks: vec![Vec::new(); root.thread_count()],
        state: root,
        backtrack: BTreeSet::new(),
        done: BTreeSet::new(),
        sleep: BTreeSet::new(),
        variants: Vec::new(),
        cur: None,
    });
    loop {
        if let Some(mut node) = fresh.take() {
            if stats.traces >= m.bounds.max_traces {
                stats.truncated = true;
                return ControlFlow::Break(());
            }
            // Race analysis against the current stack, blocked threads included.
            for pth in 0..node.state.thread_count() {
                let Some(next) = m.next_op(&node.state, pth) else { continue };
                let cp = &node.clocks[pth];
                let hit = trans.iter().enumerate().rev().find(|(i, tr)| {
                    tr.thread != pth && dependent(&tr.op, tr.thread, &next, pth) && get(cp, tr.thread) < i + 1
                });
                if let Some((i, _)) = hit {
                    // Threads enabled before transition i whose later
                    // transitions lead up to pth's next one.
                    let pre = &stack[i];
                    let cand = std::iter::once(pth)
                        .chain(trans[i + 1..].iter().enumerate().filter(|(k, tr)| get(cp, tr.thread) > i + 1 + k).map(|(_, tr)| tr.thread))
                        .find(|&q| m.enabled(&pre.state, q));
                    let pre = &mut stack[i];
                    match cand {
                        Some(q) => {
                            pre.backtrack.insert(q);
                        }
                        None => {
                            let all = m.enabled_threads(&pre.state);
                            pre.backtrack.extend(all);
                        }
                    }
                }
            }
            let enabled = m.enabled_threads(&node.state);
            if events.len() >= m.bounds.max_events || enabled.is_empty() {
                if !enabled.is_empty() {
                    node.state.mark_bounded();
                }
                finish(&node.state, &events, stats, visit)?;
            } else if let Some(&first) = enabled.iter().find(|t| !node.sleep.contains(t)) {
                node.backtrack.insert(first);
                stack.push(node);
            } else {
                // Every continuation is covered elsewhere. Keep the node so
                // that its race analysis above still counts, but explore
                // nothing from it.
                stack.push(node);
            }
        }
        // Choose the next transition from the deepest unfinished node.
        loop {
            let depth = stack.len();
            let Some(top) = stack.last_mut() else { return ControlFlow::Continue(()) };
            events.truncate(depth - 1);
            trans.truncate(depth - 1);
            if top.variants.is_empty() {
                if let Some((prev, _, _)) = top.cur.take() {
                    top.sleep.insert(prev);
                }
                let Some(&pth) = top.backtrack.iter().find(|t| !top.done.contains(t)) else {
                    stack.pop();
                    continue;
                };
                top.done.insert(pth);
                if !m.enabled(&top.state, pth) || top.sleep.contains(&pth) {
                    continue;
                }
                let op = m.next_op(&top.state, pth).unwrap();
                let (e, mut succs) = m.step(&top.state, pth);
                succs.reverse();
                top.variants = succs;
                top.cur = Some((pth, e, op));
            }
            let next = top.variants.pop().unwrap();
            let (pth, e, op) = top.cur.unwrap();
            let i = depth - 1;
            let mut clock = top.clocks[pth].clone();
            for tr in &trans {
                if dependent(&tr.op, tr.thread, &op, pth) {
                    join(&mut clock, &tr.clock);
                }
            }
            if clock.len() <= pth {
                clock.resize(pth + 1, 0);
            }
            clock[pth] = i + 1;
            let mut clocks = top.clocks.clone();
            clocks.resize(next.thread_count(), Vec::new());
            clocks[pth] = clock.clone();
            if let EventKind::Create(child) = e.kind {
                clocks[child] = clock.clone();
            }
            let sleep = top
                .sleep
                .iter()
                .copied()
                .filter(|&q| m.next_op(&top.state, q).is_some_and(|oq| !dependent(&oq, q, &op, pth)))
                .collect();
            events.push(e);
            trans.push(Transition { thread: pth, op, clock });
            fresh = Some(DporNode {
                state: next,
                clocks,
                backtrack: BTreeSet::new(),
                done: BTreeSet::new(),
                sleep,
                variants: Vec::new(),
                cur: None,
            });
            break;
        }
    }
}

/// Seeded random scheduler: at every step a uniformly chosen enabled thread
/// runs, and branch outcomes are chosen uniformly too.
pub fn sample_traces(
    p: &Program,
    bounds: Bounds,
    n: usize,
    seed: u64,
    visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>,
) -> ExploreStats {
    let m = Machine::new(p, bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ExploreStats::default();
    for _ in 0..n {
        let mut roots = m.initial();
        let mut s = roots.swap_remove(rng.gen_range(0..roots.len()));
        let mut events = Vec::new();
        loop {
            let enabled = m.enabled_threads(&s);
            if enabled.is_empty() {
                break;
            }
            if events.len() >= bounds.max_events {
                s.mark_bounded();
                break;
            }
            let t = enabled[rng.gen_range(0..enabled.len())];
            let (e, mut succs) = m.step(&s, t);
            events.push(e);
            s = succs.swap_remove(rng.gen_range(0..succs.len()));
        }
        if finish(&s, &events, &mut stats, visit).is_break() {
            break;
        }
    }
    stats
}
