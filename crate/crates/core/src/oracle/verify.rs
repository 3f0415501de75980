// SPDX-License-Identifier: Apache-2.0

//! Checks of the static pipeline against observed races.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::hb::{detect_races_offline, Instrumented, Race, RaceJson};
use super::machine::{Trace, TraceStatus};
use crate::ir::{AccessId, Program};
use crate::pipeline::Report;

/// A failing trace, cut right after the later event of the offending race.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub race: RaceJson,
    pub status: TraceStatus,
    pub events: Vec<String>,
}

impl Counterexample {
    fn new(p: &Program, t: &Trace, r: &Race) -> Self {
        let prefix = Trace { events: t.events[..=r.second].to_vec(), status: t.status, threads: t.threads };
        let events = prefix.render(p).lines().filter(|l| !l.starts_with("status")).map(str::to_string).collect();
        Counterexample { race: RaceJson::new(p, r), status: t.status, events }
    }

    pub fn render(&self) -> String {
        let mut s = format!("race {} ~ {} on {}\n", self.race.a, self.race.b, self.race.loc);
        for l in &self.events {
            s.push_str(l);
            s.push('\n');
        }
        s.push_str(&format!("status {}\n", self.status));
        s
    }
}

fn keep_shortest(slot: &mut Option<Counterexample>, p: &Program, t: &Trace, r: &Race) {
    if slot.as_ref().is_none_or(|o| r.second + 1 < o.events.len()) {
        *slot = Some(Counterexample::new(p, t, r));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SafetyVerdict {
    pub pass: bool,
    pub traces: usize,
    /// Distinct (access pair, location) races seen under full instrumentation.
    pub races: usize,
    /// Safety-eliminated accesses that took part in a race.
    pub violating_accesses: Vec<String>,
    pub counterexample: Option<Counterexample>,
}

/// No race under full instrumentation involves an access removed by STC,
/// SWMR, LO or EA.
pub struct SafetyChecker<'a> {
    p: &'a Program,
    eliminated: BTreeSet<AccessId>,
    traces: usize,
    races: BTreeSet<(AccessId, AccessId, super::ConcreteLoc)>,
    violating: BTreeSet<AccessId>,
    cex: Option<Counterexample>,
}

impl<'a> SafetyChecker<'a> {
    pub fn new(p: &'a Program, report: &Report) -> Self {
        SafetyChecker {
            p,
            eliminated: report.safety_eliminated(),
            traces: 0,
            races: BTreeSet::new(),
            violating: BTreeSet::new(),
            cex: None,
        }
    }

    pub fn observe(&mut self, t: &Trace) {
        self.observe_races(t, &detect_races_offline(t, Instrumented::All));
    }

    pub fn observe_races(&mut self, t: &Trace, races: &[Race]) {
        self.traces += 1;
        for r in races {
            self.races.insert(r.key());
            let bad: Vec<AccessId> = [r.a, r.b].into_iter().filter(|x| self.eliminated.contains(x)).collect();
            if !bad.is_empty() {
                self.violating.extend(bad);
                keep_shortest(&mut self.cex, self.p, t, r);
            }
        }
    }

    pub fn finish(self) -> SafetyVerdict {
        SafetyVerdict {
            pass: self.violating.is_empty(),
            traces: self.traces,
            races: self.races.len(),
            violating_accesses: self.violating.iter().map(|a| a.render(self.p)).collect(),
            counterexample: self.cex,
        }
    }
}

/// A race left without a covering race because its trace was cut short.
#[derive(Debug, Clone, Serialize)]
pub struct Vacuous {
    pub trace: usize,
    pub status: TraceStatus,
    pub race: RaceJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakVerdict {
    pub pass: bool,
    pub traces: usize,
    /// Race occurrences involving a DE-eliminated access.
    pub checked: usize,
    /// Covered by a race between instrumented accesses earlier in the trace.
    pub covered_dom: usize,
    /// Covered only by a race completing later in the trace.
    pub covered_postdom: usize,
    /// Skipped because the trace does not terminate and optimistic
    /// termination is assumed.
    pub assumed_terminating: usize,
    pub vacuous_count: usize,
    /// First few vacuous cases.
    pub vacuous: Vec<Vacuous>,
    pub counterexample: Option<Counterexample>,
}

const VACUOUS_LISTED: usize = 20;

/// Every race involving a DE-eliminated access has, in the same trace, a
/// race on the same location between two accesses of the final set.
pub struct WeakChecker<'a> {
    p: &'a Program,
    final_set: BTreeSet<AccessId>,
    dom: BTreeSet<AccessId>,
    postdom: BTreeSet<AccessId>,
    optimistic: bool,
    v: WeakVerdict,
}

impl<'a> WeakChecker<'a> {
    pub fn new(p: &'a Program, report: &Report) -> Self {
        WeakChecker {
            p,
            final_set: report.final_set.clone(),
            dom: report.de.dom_redundant.keys().copied().collect(),
            postdom: report.de.postdom_redundant.keys().copied().collect(),
            optimistic: report.config.de && report.config.de_optimistic,
            v: WeakVerdict {
                pass: true,
                traces: 0,
                checked: 0,
                covered_dom: 0,
                covered_postdom: 0,
                assumed_terminating: 0,
                vacuous_count: 0,
                vacuous: Vec::new(),
                counterexample: None,
            },
        }
    }

    pub fn observe(&mut self, t: &Trace) {
        self.observe_races(t, &detect_races_offline(t, Instrumented::All));
    }

    pub fn observe_races(&mut self, t: &Trace, races: &[Race]) {
        let trace_no = self.v.traces;
        self.v.traces += 1;
        let de = |x: &AccessId| self.dom.contains(x) || self.postdom.contains(x);
        // Earliest completion of a final-set race per location.
        let mut cover: BTreeMap<super::ConcreteLoc, usize> = BTreeMap::new();
        for r in races {
            if self.final_set.contains(&r.a) && self.final_set.contains(&r.b) {
                let e = cover.entry(r.loc).or_insert(r.second);
                *e = (*e).min(r.second);
            }
        }
        for r in races.iter().filter(|r| de(&r.a) || de(&r.b)) {
            let only_postdom = !self.dom.contains(&r.a) && !self.dom.contains(&r.b);
            if self.optimistic && only_postdom && t.status != TraceStatus::Terminated {
                self.v.assumed_terminating += 1;
                continue;
            }
            self.v.checked += 1;
            match cover.get(&r.loc) {
                Some(&c) if c <= r.second => self.v.covered_dom += 1,
                Some(_) => self.v.covered_postdom += 1,
                None if matches!(t.status, TraceStatus::Bounded | TraceStatus::Fault) => {
                    self.v.vacuous_count += 1;
                    if self.v.vacuous.len() < VACUOUS_LISTED {
                        self.v.vacuous.push(Vacuous { trace: trace_no, status: t.status, race: RaceJson::new(self.p, r) });
                    }
                }
                None => {
                    self.v.pass = false;
                    keep_shortest(&mut self.v.counterexample, self.p, t, r);
                }
            }
        }
    }

    pub fn finish(self) -> WeakVerdict {
        self.v
    }
}

/// Accesses the dynamic oracle considers worth instrumenting: they touch a
/// location that more than one thread touches in the same trace, and they
/// run while the program is multi-threaded.
pub struct Tracer {
    pub accesses: BTreeSet<AccessId>,
}

impl Tracer {
    pub fn new() -> Self {
        Tracer { accesses: BTreeSet::new() }
    }

    pub fn observe(&mut self, t: &Trace) {
        let mut touched: BTreeMap<super::ConcreteLoc, BTreeSet<usize>> = BTreeMap::new();
        for e in &t.events {
            if let Some(l) = e.location() {
                touched.entry(l).or_default().insert(e.thread);
            }
        }
        let mut main_mt = false;
        for e in &t.events {
            if e.thread == 0 && matches!(e.kind, super::EventKind::Create(_)) {
                main_mt = true;
            }
            let Some(l) = e.location() else { continue };
            let mt = e.thread != 0 || main_mt;
            if mt && touched[&l].len() > 1 {
                self.accesses.insert(e.access().unwrap());
            }
        }
    }
}

impl Default for Tracer {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapStats {
    pub q_orig: usize,
    pub final_instrumented: usize,
    pub tracer: usize,
    /// Final accesses the tracer never flagged.
    pub final_not_traced: usize,
    /// `final_not_traced / q_orig`.
    pub gap: f64,
    pub final_fraction: f64,
    pub tracer_fraction: f64,
    pub traces: usize,
}

pub fn gap_stats(report: &Report, tracer: &Tracer, traces: usize) -> GapStats {
    let q = report.q_orig();
    let frac = |n: usize| if q == 0 { 0.0 } else { n as f64 / q as f64 };
    let missing = report.final_set.difference(&tracer.accesses).count();
    GapStats {
        q_orig: q,
        final_instrumented: report.final_set.len(),
        tracer: tracer.accesses.len(),
        final_not_traced: missing,
        gap: frac(missing),
        final_fraction: frac(report.final_set.len()),
        tracer_fraction: frac(tracer.accesses.len()),
        traces,
    }
}
