// SPDX-License-Identifier: Apache-2.0

//! Dynamic oracle: a concrete interpreter, interleaving enumeration, race
//! detection and the checks that compare observed races with the static
//! pipeline.

mod explore;
mod hb;
mod machine;
mod verify;

use std::ops::ControlFlow;

use serde::Serialize;

pub use explore::{all_traces, enumerate_traces, sample_traces, ExploreStats, Strategy};
pub use hb::{
    detect_races_offline, detect_races_vc, first_race_per_location, HbClosure, Instrumented, Race, RaceJson,
    VectorClock,
};
pub use machine::{Bounds, ConcreteLoc, Event, EventKind, Machine, Op, State, ThreadId, Trace, TraceStatus, Value};
pub use verify::{
    gap_stats, Counterexample, GapStats, SafetyChecker, SafetyVerdict, Tracer, Vacuous, WeakChecker, WeakVerdict,
};

use crate::ir::Program;
use crate::pipeline::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exhaustive(Strategy),
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleConfig {
    pub bounds: Bounds,
    pub source: Source,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { bounds: Bounds::default(), source: Source::Exhaustive(Strategy::Dpor) }
    }
}

/// Feed every trace of the configured source to `visit`.
pub fn for_each_trace(p: &Program, cfg: &OracleConfig, visit: &mut dyn FnMut(&Trace) -> ControlFlow<()>) -> ExploreStats {
    match cfg.source {
        Source::Exhaustive(s) => enumerate_traces(p, cfg.bounds, s, visit),
        Source::Sampled { samples, seed } => sample_traces(p, cfg.bounds, samples, seed, visit),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub oracle: OracleConfig,
    pub exploration: ExploreStats,
    pub safety: SafetyVerdict,
    pub weak_sufficiency: WeakVerdict,
}

impl Verification {
    pub fn pass(&self) -> bool {
        self.safety.pass && self.weak_sufficiency.pass
    }
}

/// Run both checks over one pass of the trace source.
pub fn verify(p: &Program, report: &Report, cfg: &OracleConfig) -> Verification {
    let mut safety = SafetyChecker::new(p, report);
    let mut weak = WeakChecker::new(p, report);
    let exploration = for_each_trace(p, cfg, &mut |t| {
        let races = detect_races_offline(t, Instrumented::All);
        safety.observe_races(t, &races);
        weak.observe_races(t, &races);
        ControlFlow::Continue(())
    });
    Verification { oracle: *cfg, exploration, safety: safety.finish(), weak_sufficiency: weak.finish() }
}

pub fn verify_safety(p: &Program, report: &Report, cfg: &OracleConfig) -> SafetyVerdict {
    let mut c = SafetyChecker::new(p, report);
    for_each_trace(p, cfg, &mut |t| {
        c.observe(t);
        ControlFlow::Continue(())
    });
    c.finish()
}

pub fn verify_weak_sufficiency(p: &Program, report: &Report, cfg: &OracleConfig) -> WeakVerdict {
    let mut c = WeakChecker::new(p, report);
    for_each_trace(p, cfg, &mut |t| {
        c.observe(t);
        ControlFlow::Continue(())
    });
    c.finish()
}

/// Tracer set and static/dynamic gap.
pub fn gap(p: &Program, report: &Report, cfg: &OracleConfig) -> (Tracer, GapStats) {
    let mut tr = Tracer::new();
    let stats = for_each_trace(p, cfg, &mut |t| {
        tr.observe(t);
        ControlFlow::Continue(())
    });
    let g = gap_stats(report, &tr, stats.traces);
    (tr, g)
}
