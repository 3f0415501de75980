// SPDX-License-Identifier: Apache-2.0

//! Happens-before and race detection over a single trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::machine::{ConcreteLoc, Event, EventKind, Trace};
use crate::ir::{AccessId, Program};

/// A pair of conflicting, hb-unordered events. `first < second` by seq.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Race {
    pub first: usize,
    pub second: usize,
    pub loc: ConcreteLoc,
    pub a: AccessId,
    pub b: AccessId,
}

impl Race {
    /// Static identity of the race: the unordered access pair and location.
    pub fn key(&self) -> (AccessId, AccessId, ConcreteLoc) {
        (self.a.min(self.b), self.a.max(self.b), self.loc)
    }

    pub fn involves(&self, x: AccessId) -> bool {
        self.a == x || self.b == x
    }

    pub fn render(&self, p: &Program) -> String {
        format!(
            "{} ({}) ~ {} ({}) on {}",
            self.a.render(p),
            self.first,
            self.b.render(p),
            self.second,
            self.loc.render(p)
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RaceJson {
    pub first: usize,
    pub second: usize,
    pub a: String,
    pub b: String,
    pub loc: String,
}

impl RaceJson {
    pub fn new(p: &Program, r: &Race) -> Self {
        RaceJson { first: r.first, second: r.second, a: r.a.render(p), b: r.b.render(p), loc: r.loc.render(p) }
    }
}

/// Which accesses a detector observes.
#[derive(Debug, Clone, Copy)]
pub enum Instrumented<'a> {
    All,
    Only(&'a BTreeSet<AccessId>),
}

impl Instrumented<'_> {
    fn observes(&self, e: &Event) -> Option<AccessId> {
        let a = e.access()?;
        match self {
            Instrumented::All => Some(a),
            Instrumented::Only(s) => s.contains(&a).then_some(a),
        }
    }
}

/// Strict happens-before predecessors of every event, as bitsets.
pub struct HbClosure {
    words: usize,
    bits: Vec<u64>,
}

impl HbClosure {
    pub fn new(t: &Trace) -> Self {
        let n = t.events.len();
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        let mut last_of_thread: BTreeMap<usize, usize> = BTreeMap::new();
        let mut last_unlock: BTreeMap<usize, usize> = BTreeMap::new();
        let mut creator: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, e) in t.events.iter().enumerate() {
            let mut direct = Vec::new();
            match last_of_thread.get(&e.thread) {
                Some(&j) => direct.push(j),
                None => direct.extend(creator.get(&e.thread).copied()),
            }
            if let EventKind::Lock(l) = e.kind {
                direct.extend(last_unlock.get(&l).copied());
            }
            for j in direct {
                for w in 0..words {
                    bits[i * words + w] |= bits[j * words + w];
                }
                bits[i * words + j / 64] |= 1 << (j % 64);
            }
            last_of_thread.insert(e.thread, i);
            match e.kind {
                EventKind::Unlock(l) => {
                    last_unlock.insert(l, i);
                }
                EventKind::Create(c) => {
                    creator.insert(c, i);
                }
                _ => {}
            }
        }
        HbClosure { words, bits }
    }

    /// `i` happens before `j` (strictly).
    pub fn before(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.words + i / 64] >> (i % 64) & 1 == 1
    }

    pub fn ordered(&self, i: usize, j: usize) -> bool {
        i == j || self.before(i, j) || self.before(j, i)
    }
}

fn conflicting(x: &Event, y: &Event) -> bool {
    x.thread != y.thread && x.location().is_some() && x.location() == y.location() && (x.is_write() || y.is_write())
}

/// Every conflicting unordered pair whose two accesses are both observed.
/// Sorted by (second, first).
pub fn detect_races_offline(t: &Trace, inst: Instrumented) -> Vec<Race> {
    let hb = HbClosure::new(t);
    let mut out = Vec::new();
    for (j, y) in t.events.iter().enumerate() {
        let Some(b) = inst.observes(y) else { continue };
        for (i, x) in t.events[..j].iter().enumerate() {
            let Some(a) = inst.observes(x) else { continue };
            if conflicting(x, y) && !hb.ordered(i, j) {
                out.push(Race { first: i, second: j, loc: y.location().unwrap(), a, b });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VectorClock(Vec<u64>);

impl VectorClock {
    pub fn get(&self, t: usize) -> u64 {
        self.0.get(t).copied().unwrap_or(0)
    }

    pub fn tick(&mut self, t: usize) {
        if self.0.len() <= t {
            self.0.resize(t + 1, 0);
        }
        self.0[t] += 1;
    }

    pub fn join(&mut self, o: &VectorClock) {
        if self.0.len() < o.0.len() {
            self.0.resize(o.0.len(), 0);
        }
        for (x, y) in self.0.iter_mut().zip(&o.0) {
            *x = (*x).max(*y);
        }
    }

    pub fn leq(&self, o: &VectorClock) -> bool {
        self.0.iter().enumerate().all(|(i, &x)| x <= o.get(i))
    }
}

#[derive(Clone, Copy)]
struct Stamp {
    seq: usize,
    thread: usize,
    epoch: u64,
    access: AccessId,
}

#[derive(Default)]
struct Shadow {
    /// Last write per thread.
    writes: BTreeMap<usize, Stamp>,
    /// Last read per thread.
    reads: BTreeMap<usize, Stamp>,
}

/// Online detector with per-thread and per-lock vector clocks. Reports, for
/// each observed access, the latest earlier conflicting access it races
/// with, which is enough to agree with the offline detector on existence and
/// on the first race per location.
pub fn detect_races_vc(t: &Trace, inst: Instrumented) -> Vec<Race> {
    let mut clocks: Vec<VectorClock> = Vec::new();
    let mut lock_clocks: BTreeMap<usize, VectorClock> = BTreeMap::new();
    let mut shadow: BTreeMap<ConcreteLoc, Shadow> = BTreeMap::new();
    let mut out = Vec::new();
    let ensure = |clocks: &mut Vec<VectorClock>, th: usize| {
        while clocks.len() <= th {
            let id = clocks.len();
            let mut c = VectorClock::default();
            c.tick(id);
            clocks.push(c);
        }
    };
    for (seq, e) in t.events.iter().enumerate() {
        let th = e.thread;
        ensure(&mut clocks, th);
        match e.kind {
            EventKind::Lock(l) => {
                if let Some(lc) = lock_clocks.get(&l) {
                    let lc = lc.clone();
                    clocks[th].join(&lc);
                }
            }
            EventKind::Unlock(l) => {
                lock_clocks.insert(l, clocks[th].clone());
                clocks[th].tick(th);
            }
            EventKind::Create(child) => {
                ensure(&mut clocks, child);
                let parent = clocks[th].clone();
                clocks[child].join(&parent);
                clocks[th].tick(th);
            }
            EventKind::Read(loc) | EventKind::Write(loc) => {
                let Some(access) = inst.observes(e) else { continue };
                let now = clocks[th].clone();
                let sh = shadow.entry(loc).or_default();
                let mut racy: Option<Stamp> = None;
                let mut check = |s: &Stamp| {
                    if s.thread != th && s.epoch > now.get(s.thread) && racy.is_none_or(|r| r.seq < s.seq) {
                        racy = Some(*s);
                    }
                };
                sh.writes.values().for_each(&mut check);
                if e.is_write() {
                    sh.reads.values().for_each(&mut check);
                }
                if let Some(r) = racy {
                    out.push(Race { first: r.seq, second: seq, loc, a: r.access, b: access });
                }
                let stamp = Stamp { seq, thread: th, epoch: now.get(th), access };
                if e.is_write() {
                    sh.writes.insert(th, stamp);
                } else {
                    sh.reads.insert(th, stamp);
                }
            }
        }
    }
    out
}

/// For each location, the race with the smallest later event, ties broken
/// by the latest earlier event.
pub fn first_race_per_location(races: &[Race]) -> BTreeMap<ConcreteLoc, (usize, usize)> {
    let mut out: BTreeMap<ConcreteLoc, (usize, usize)> = BTreeMap::new();
    for r in races {
        let better = |cur: &(usize, usize)| r.second < cur.1 || (r.second == cur.1 && r.first > cur.0);
        match out.get(&r.loc) {
            Some(cur) if !better(cur) => {}
            _ => {
                out.insert(r.loc, (r.first, r.second));
            }
        }
    }
    out
}
