// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

use racetrim_core::gen::{generate, GenConfig};
use racetrim_core::ir::{parse, AccessId, Program};
use racetrim_core::oracle::*;
use racetrim_core::pipeline::{run_pipeline, PipelineConfig};

const FIG1: &str = include_str!("../../../programs/fig1.mini");
const FIG3: &str = include_str!("../../../programs/fig3.mini");

fn exhaustive(strategy: Strategy) -> OracleConfig {
    OracleConfig { bounds: Bounds::default(), source: Source::Exhaustive(strategy) }
}

/// Per-trace sorted race keys with the trace status.
type RaceSets = BTreeSet<(Vec<(AccessId, AccessId, ConcreteLoc)>, TraceStatus)>;

fn race_sets(p: &Program, strategy: Strategy) -> (RaceSets, ExploreStats) {
    let mut sets = BTreeSet::new();
    let b = Bounds { max_traces: 50_000_000, ..Bounds::default() };
    let stats = enumerate_traces(p, b, strategy, &mut |t| {
        let mut keys: Vec<_> = detect_races_offline(t, Instrumented::All).iter().map(Race::key).collect();
        keys.sort();
        keys.dedup();
        sets.insert((keys, t.status));
        ControlFlow::Continue(())
    });
    (sets, stats)
}

#[test]
fn reduced_and_plain_enumeration_see_the_same_races() {
    for seed in 0..150 {
        let p = generate(seed, GenConfig::default());
        let (a, sa) = race_sets(&p, Strategy::Dfs);
        let (b, sb) = race_sets(&p, Strategy::Dpor);
        assert!(!sa.truncated && !sb.truncated);
        assert_eq!(a, b, "seed {seed}");
        assert!(sb.traces <= sa.traces);
    }
}

#[test]
fn vector_clocks_agree_with_offline_closure() {
    for seed in 0..200 {
        let p = generate(seed, GenConfig::default());
        let all: BTreeSet<AccessId> = p.accesses().into_iter().collect();
        let half: BTreeSet<AccessId> = all.iter().copied().step_by(2).collect();
        enumerate_traces(&p, Bounds::default(), Strategy::Dpor, &mut |t| {
            for inst in [Instrumented::All, Instrumented::Only(&half)] {
                let off = detect_races_offline(t, inst);
                let vc = detect_races_vc(t, inst);
                assert_eq!(off.is_empty(), vc.is_empty(), "seed {seed}");
                assert_eq!(first_race_per_location(&off), first_race_per_location(&vc), "seed {seed}");
                // Every online report is a real race.
                for r in &vc {
                    assert!(off.contains(r), "seed {seed}");
                }
            }
            ControlFlow::Continue(())
        });
    }
}

/// Lock discipline and thread-local program order hold in every prefix.
#[test]
fn traces_respect_lock_discipline() {
    for seed in 0..100 {
        let p = generate(seed, GenConfig::default());
        enumerate_traces(&p, Bounds::default(), Strategy::Dpor, &mut |t| {
            let mut holder: BTreeMap<usize, usize> = BTreeMap::new();
            let mut created = BTreeSet::from([0]);
            for e in &t.events {
                assert!(created.contains(&e.thread));
                match e.kind {
                    EventKind::Lock(l) => assert!(holder.insert(l, e.thread).is_none()),
                    EventKind::Unlock(l) => assert_eq!(holder.remove(&l), Some(e.thread)),
                    EventKind::Create(c) => assert!(created.insert(c)),
                    _ => {}
                }
            }
            ControlFlow::Continue(())
        });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enlarging_instrumentation_keeps_races(seed in 0u64..10_000, mask in any::<u64>(), extra in any::<u64>()) {
        let p = generate(seed, GenConfig::default());
        let acc = p.accesses();
        let small: BTreeSet<AccessId> = acc.iter().enumerate().filter(|(i, _)| mask >> (i % 64) & 1 == 1).map(|(_, a)| *a).collect();
        let mut big = small.clone();
        big.extend(acc.iter().enumerate().filter(|(i, _)| extra >> (i % 64) & 1 == 1).map(|(_, a)| *a));
        let mut ok = true;
        sample_traces(&p, Bounds::default(), 20, seed, &mut |t| {
            let s: BTreeSet<Race> = detect_races_offline(t, Instrumented::Only(&small)).into_iter().collect();
            let b: BTreeSet<Race> = detect_races_offline(t, Instrumented::Only(&big)).into_iter().collect();
            ok &= s.is_subset(&b);
            ControlFlow::Continue(())
        });
        prop_assert!(ok);
    }
}

#[test]
fn fig1_enumeration_completes_and_finds_the_g_sum_race() {
    let p = parse(FIG1).unwrap();
    let g_sum = p.global_by_name("g_sum").unwrap();
    let b = Bounds { max_loop_iters: 2, ..Bounds::default() };
    let mut found = false;
    let stats = enumerate_traces(&p, b, Strategy::Dpor, &mut |t| {
        found |= detect_races_offline(t, Instrumented::All).iter().any(|r| {
            matches!(r.loc, ConcreteLoc::Global { global, .. } if global == g_sum)
                && t.events[r.first].thread != t.events[r.second].thread
                && t.events[r.first].thread != 0
        });
        ControlFlow::Continue(())
    });
    assert!(!stats.truncated);
    assert!(found);
}

#[test]
fn fig1_verifies() {
    let p = parse(FIG1).unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let v = verify(&p, &r, &exhaustive(Strategy::Dpor));
    assert!(!v.exploration.truncated);
    assert!(v.safety.pass && v.weak_sufficiency.pass, "{v:?}");
    assert!(v.weak_sufficiency.covered_dom > 0);
}

#[test]
fn fig3_races_at_i2_and_i3_are_covered() {
    let p = parse(FIG3).unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let w = verify_weak_sufficiency(&p, &r, &exhaustive(Strategy::Dfs));
    assert!(w.pass);
    assert!(w.covered_dom > 0 && w.covered_postdom > 0, "{w:?}");
    assert_eq!(w.vacuous_count, 0);
}

#[test]
fn lo_fault_is_caught_with_a_witness() {
    let src = "global g; lock l;
        fn w() { b0: c = &g; lock l; unlock l; write *c, c; return; }
        fn main() { b0: create w; create w; return; }";
    let p = parse(src).unwrap();
    let mut config = PipelineConfig::default();
    config.faults.enable("lo-ignore-unlock").unwrap();
    let r = run_pipeline(&p, &config);
    let s = verify_safety(&p, &r, &exhaustive(Strategy::Dfs));
    assert!(!s.pass);
    let c = s.counterexample.unwrap();
    assert!(c.events.len() >= 2);
    assert!(c.race.loc == "g");
    let clean = run_pipeline(&p, &PipelineConfig::default());
    assert!(verify_safety(&p, &clean, &exhaustive(Strategy::Dfs)).pass);
}

#[test]
fn single_threaded_program_passes_vacuously() {
    let p = parse("global g; fn main() { b0: c = &g; write *c, c; x = read *c; return; }").unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let v = verify(&p, &r, &exhaustive(Strategy::Dfs));
    assert!(v.pass());
    assert_eq!((v.safety.races, v.weak_sufficiency.checked), (0, 0));
}

#[test]
fn optimistic_mode_skips_non_terminating_traces() {
    // Unbounded recursion between the read and the write: some traces
    // hit the call-depth bound before reaching the write.
    let src = "global g;
        fn spin() { b0: branch b1 b2; b1: call spin(); return; b2: return; }
        fn r() { b0: c = &g; x = read *c; call spin(); write *c, x; return; }
        fn w() { b0: c = &g; write *c, c; return; }
        fn main() { b0: create r; create w; return; }";
    let p = parse(src).unwrap();
    let config = PipelineConfig { de_optimistic: true, ..PipelineConfig::default() };
    let r = run_pipeline(&p, &config);
    assert_eq!(r.de.postdom_redundant.len(), 1);
    let w = verify_weak_sufficiency(&p, &r, &exhaustive(Strategy::Dfs));
    assert!(w.pass);
    assert!(w.assumed_terminating > 0);
    let strict = run_pipeline(&p, &PipelineConfig::default());
    assert!(strict.de.postdom_redundant.is_empty());
}

#[test]
fn tracer_on_fig1() {
    let p = parse(FIG1).unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let cfg = OracleConfig { bounds: Bounds { max_loop_iters: 2, ..Bounds::default() }, source: Source::Exhaustive(Strategy::Dpor) };
    let (tr, g) = gap(&p, &r, &cfg);
    let id = |l: &str| p.access_by_label(l).unwrap();
    // The config read runs concurrently with other threads reading it.
    assert!(tr.accesses.contains(&id("worker_thread:b0:7:r")));
    // Counter accesses are lock protected but still shared.
    assert!(tr.accesses.contains(&id("worker_thread:b0:2:r")));
    // The single-threaded initialization write never runs with other threads.
    assert!(!tr.accesses.contains(&id("initialize_system:b0:2:w")));
    assert!(g.gap > 0.0);
}

#[test]
fn tracer_on_single_thread_is_empty() {
    let p = parse("global g; fn main() { b0: c = &g; write *c, c; return; }").unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let (tr, g) = gap(&p, &r, &exhaustive(Strategy::Dfs));
    assert!(tr.accesses.is_empty());
    assert_eq!(g.gap, 0.0);
}

#[test]
fn fully_racy_program_has_no_gap() {
    let src = "global g; fn w() { b0: c = &g; write *c, c; return; } fn main() { b0: create w; create w; return; }";
    let p = parse(src).unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let (_, g) = gap(&p, &r, &exhaustive(Strategy::Dfs));
    assert_eq!(g.final_instrumented, 1);
    assert_eq!(g.gap, 0.0);
}
