// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line for each, and exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use racetrim_core::facts::{compute_dominance, Facts};
use racetrim_core::faults::FAULT_NAMES;
use racetrim_core::gen::{generate, GenConfig};
use racetrim_core::ir::{parse, Cfg, Program};
use racetrim_core::oracle::{
    detect_races_offline, detect_races_vc, first_race_per_location, for_each_trace, gap, verify, Bounds,
    Instrumented, OracleConfig, SafetyChecker, Source, Strategy, WeakChecker,
};
use racetrim_core::pipeline::{run_pipeline, Analysis, PipelineConfig, Verdict};
use racetrim_core::safety::{compute_escape, compute_escape_kleene, compute_stc, compute_stc_kleene};

const FIG1: &str = include_str!("../../../programs/fig1.mini");
const FIG3: &str = include_str!("../../../programs/fig3.mini");
const FIG4: &str = include_str!("../../../programs/fig4.mini");

const CORPUS: u64 = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Plain depth-first enumeration under the default bounds (loop bound 3).
fn exhaustive() -> OracleConfig {
    OracleConfig {
        bounds: Bounds { max_traces: 50_000_000, ..Bounds::default() },
        source: Source::Exhaustive(Strategy::Dfs),
    }
}

fn verdict_table(p: &Program, config: &PipelineConfig) -> BTreeMap<String, String> {
    let r = run_pipeline(p, config);
    r.verdicts
        .iter()
        .map(|(a, v)| {
            let s = match v {
                Verdict::Instrumented => "instrumented".to_string(),
                Verdict::Eliminated { by, witness: None } => by.name().to_string(),
                Verdict::Eliminated { by, witness: Some(w) } => format!("{}<{}", by.name(), w.render(p)),
            };
            (a.render(p), s)
        })
        .collect()
}

fn fig1_golden() -> Outcome {
    let start = Instant::now();
    let p = parse(FIG1).unwrap();
    let got = verdict_table(&p, &PipelineConfig::default());
    let took = start.elapsed();
    let expected: BTreeMap<String, String> = [
        // (1) initialization before any thread exists
        ("initialize_system:b0:2:w", "stc"),
        // (2a) the request object never leaves its thread
        ("process_req_internals:b0:0:r", "ea"),
        ("process_req_internals:b0:2:w", "ea"),
        ("worker_thread:b0:9:w", "ea"),
        // (4) always under g_lock
        ("worker_thread:b0:2:r", "lo"),
        ("worker_thread:b0:4:w", "lo"),
        // (3) config is only written before threads start
        ("worker_thread:b0:7:r", "swmr"),
        // (2b) queue access stays
        ("worker_thread:b0:12:w", "instrumented"),
        ("worker_thread:b0:15:w", "instrumented"),
        ("worker_thread:b0:18:w", "instrumented"),
        ("worker_thread:body:0:r", "instrumented"),
        // (5) the accumulation repeats a dominating g_sum access
        ("worker_thread:body:2:r", "de_dom<worker_thread:b0:18:w"),
        ("worker_thread:body:4:w", "de_dom<worker_thread:b0:18:w"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let mut diff = Vec::new();
    for k in expected.keys().chain(got.keys()).collect::<BTreeSet<_>>() {
        if expected.get(k) != got.get(k) {
            diff.push(format!("{k}: expected {:?} got {:?}", expected.get(k), got.get(k)));
        }
    }
    let fast = took < Duration::from_secs(1);
    let pass = diff.is_empty() && fast;
    let detail = if diff.is_empty() {
        format!("{} accesses match, {took:?}", got.len())
    } else {
        diff.join("; ")
    };
    outcome(pass, detail)
}

fn fig3_golden() -> Outcome {
    let p = parse(FIG3).unwrap();
    let r = run_pipeline(&p, &PipelineConfig { de_postdom: true, ..PipelineConfig::default() });
    let frag = p.func_by_name("frag").unwrap();
    let id = |l: &str| p.access_by_label(l).unwrap();
    let final_frag: Vec<_> = r.final_set.iter().filter(|a| a.func == frag).copied().collect();
    let want_final = vec![id("frag:BB1:0:r"), id("frag:BB5:0:r"), id("frag:BB5:1:r")];
    let dom_ok = r.de.dom_redundant.get(&id("frag:BB3:0:r")) == Some(&id("frag:BB1:0:r"));
    let postdom_ok = r.de.postdom_redundant.get(&id("frag:BB4:0:r")) == Some(&id("frag:BB5:1:r"));
    let only_two = r.de.dom_redundant.len() + r.de.postdom_redundant.len() == 2;
    let render = |v: &[racetrim_core::ir::AccessId]| v.iter().map(|a| a.render(&p)).collect::<Vec<_>>().join(", ");
    outcome(
        final_frag == want_final && dom_ok && postdom_ok && only_two,
        format!("final {{{}}}, I2 dom {dom_ok}, I3 postdom {postdom_ok}", render(&final_frag)),
    )
}

#[derive(Default)]
struct CorpusTally {
    programs: usize,
    traces: usize,
    truncated: usize,
    shape_violations: Vec<u64>,
    safety_eliminated: usize,
    de_eliminated: usize,
    safety_failures: Vec<(u64, String)>,
    weak_failures: Vec<(u64, String)>,
    checked: usize,
    covered_dom: usize,
    covered_postdom: usize,
    vacuous: usize,
    vc_disagreements: Vec<u64>,
}

fn instruction_count(p: &Program) -> usize {
    p.functions.iter().map(|f| f.instrs().count()).sum()
}

/// Criteria 3 and 4 and the corpus half of 5(b), over one enumeration per
/// program.
fn run_corpus() -> CorpusTally {
    let mut t = CorpusTally::default();
    let oracle = exhaustive();
    let mut sample_rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..CORPUS {
        let p = generate(seed, GenConfig::default());
        if instruction_count(&p) > 40 || p.create_targets().len() > 2 {
            t.shape_violations.push(seed);
        }
        let r = run_pipeline(&p, &PipelineConfig::default());
        t.safety_eliminated += r.verdicts.values().filter(|v| v.eliminated_by().is_some_and(Analysis::is_safety)).count();
        t.de_eliminated += r.de.dom_redundant.len() + r.de.postdom_redundant.len();
        let mut safety = SafetyChecker::new(&p, &r);
        let mut weak = WeakChecker::new(&p, &r);
        let mut agrees = true;
        let subset: BTreeSet<_> = p.accesses().into_iter().filter(|_| sample_rng.gen_bool(0.5)).collect();
        let stats = for_each_trace(&p, &oracle, &mut |tr| {
            let races = detect_races_offline(tr, Instrumented::All);
            safety.observe_races(tr, &races);
            weak.observe_races(tr, &races);
            for inst in [Instrumented::All, Instrumented::Only(&subset)] {
                let off = first_race_per_location(&detect_races_offline(tr, inst));
                let vc = first_race_per_location(&detect_races_vc(tr, inst));
                agrees &= off == vc;
            }
            ControlFlow::Continue(())
        });
        let (s, w) = (safety.finish(), weak.finish());
        t.programs += 1;
        t.traces += stats.traces;
        t.truncated += usize::from(stats.truncated);
        if !s.pass {
            t.safety_failures.push((seed, s.violating_accesses.join(" ")));
        }
        if !w.pass {
            let race = w.counterexample.map(|c| format!("{} {}", c.race.a, c.race.b)).unwrap_or_default();
            t.weak_failures.push((seed, race));
        }
        t.checked += w.checked;
        t.covered_dom += w.covered_dom;
        t.covered_postdom += w.covered_postdom;
        t.vacuous += w.vacuous_count;
        if !agrees {
            t.vc_disagreements.push(seed);
        }
    }
    t
}

fn safety_criterion(t: &CorpusTally) -> Outcome {
    let pass = t.safety_failures.is_empty() && t.truncated == 0 && t.shape_violations.is_empty();
    let mut detail = format!(
        "{} programs, {} traces, {} safety eliminations, {} failures, {} truncated",
        t.programs,
        t.traces,
        t.safety_eliminated,
        t.safety_failures.len(),
        t.truncated
    );
    if let Some((seed, acc)) = t.safety_failures.first() {
        detail += &format!(", first seed {seed}: {acc}");
    }
    if !t.shape_violations.is_empty() {
        detail += &format!(", oversized seeds {:?}", t.shape_violations);
    }
    outcome(pass, detail)
}

fn weak_criterion(t: &CorpusTally) -> Outcome {
    let pass = t.weak_failures.is_empty() && t.truncated == 0;
    let mut detail = format!(
        "{} DE eliminations, {} races checked, {} dom-covered, {} postdom-covered, {} vacuous, {} failures",
        t.de_eliminated,
        t.checked,
        t.covered_dom,
        t.covered_postdom,
        t.vacuous,
        t.weak_failures.len()
    );
    if let Some((seed, race)) = t.weak_failures.first() {
        detail += &format!(", first seed {seed}: {race}");
    }
    outcome(pass, detail)
}

/// Does every simple path from `from` to `to` pass through `via`?
/// `None` when no path exists.
fn all_paths_through(succs: &[Vec<usize>], from: usize, to: usize, via: usize) -> Option<bool> {
    fn go(succs: &[Vec<usize>], cur: usize, to: usize, via: usize, seen: &mut [bool], hit: bool, out: &mut Option<bool>) {
        let hit = hit || cur == via;
        if cur == to {
            *out = Some(out.unwrap_or(true) && hit);
            return;
        }
        for &n in &succs[cur] {
            if !seen[n] {
                seen[n] = true;
                go(succs, n, to, via, seen, hit, out);
                seen[n] = false;
            }
        }
    }
    let mut seen = vec![false; succs.len()];
    seen[from] = true;
    let mut out = None;
    go(succs, from, to, via, &mut seen, false, &mut out);
    out
}

fn random_cfg(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=8);
    let mut s = String::from("fn main() {\n");
    for i in 0..n {
        let t = match rng.gen_range(0..3) {
            0 => "return;".to_string(),
            1 => format!("goto b{};", rng.gen_range(0..n)),
            _ => format!("branch b{} b{};", rng.gen_range(0..n), rng.gen_range(0..n)),
        };
        s.push_str(&format!("  b{i}:\n    {t}\n"));
    }
    s.push_str("}\n");
    s
}

fn dominance_cross_check() -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut queries = 0;
    for _ in 0..200 {
        let p = parse(&random_cfg(&mut rng)).unwrap();
        let cfg = Cfg::new(p.main_fn());
        let d = compute_dominance(&cfg);
        let n = p.main_fn().blocks.len();
        for a in 0..n {
            for b in 0..n {
                let dom = a == b || all_paths_through(&cfg.succs, 0, b, a).unwrap_or(false);
                let pdom = a == b || all_paths_through(&cfg.succs, b, cfg.exit, a).unwrap_or(false);
                queries += 2;
                mismatches += usize::from(d.dominates(a, b) != dom) + usize::from(d.postdominates(a, b) != pdom);
            }
        }
    }
    (queries, mismatches)
}

fn kleene_cross_check() -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    let mut programs: Vec<(String, Program)> =
        [("fig1", FIG1), ("fig3", FIG3), ("fig4", FIG4)].iter().map(|(n, s)| (n.to_string(), parse(s).unwrap())).collect();
    programs.extend((0..CORPUS).map(|seed| (format!("seed {seed}"), generate(seed, GenConfig::default()))));
    for (name, p) in &programs {
        let f = Facts::compute(p);
        if compute_stc(p, &f.cg) != compute_stc_kleene(p, &f.cg)
            || compute_escape(p, &f.cg, &f.pt) != compute_escape_kleene(p, &f.cg, &f.pt)
        {
            bad.push(name.clone());
        }
    }
    (programs.len(), bad)
}

fn cross_checks(t: &CorpusTally) -> Outcome {
    let (queries, dom_bad) = dominance_cross_check();
    let (kleene_n, kleene_bad) = kleene_cross_check();
    let pass = dom_bad == 0 && t.vc_disagreements.is_empty() && kleene_bad.is_empty();
    outcome(
        pass,
        format!(
            "(a) {queries} dominance queries, {dom_bad} mismatches; (b) {} traces, {} programs disagree; (c) {kleene_n} programs, {} differ",
            t.traces,
            t.vc_disagreements.len(),
            kleene_bad.len()
        ),
    )
}

/// Scan the corpus under one fault until criterion 3 or 4 fails with a
/// counterexample.
fn first_catch(fault: &str) -> Option<(u64, &'static str, String)> {
    let oracle = exhaustive();
    for seed in 0..CORPUS {
        let p = generate(seed, GenConfig::default());
        let mut config = PipelineConfig::default();
        config.faults.enable(fault).unwrap();
        let r = run_pipeline(&p, &config);
        let v = verify(&p, &r, &oracle);
        if let (false, Some(c)) = (v.safety.pass, &v.safety.counterexample) {
            return Some((seed, "safety", c.race.b.clone()));
        }
        if let (false, Some(c)) = (v.weak_sufficiency.pass, &v.weak_sufficiency.counterexample) {
            return Some((seed, "weak sufficiency", c.race.b.clone()));
        }
    }
    None
}

fn fault_injection() -> Outcome {
    let mut parts = Vec::new();
    let mut caught_by_analysis: BTreeMap<&str, bool> = BTreeMap::new();
    let mut required = true;
    for &fault in FAULT_NAMES {
        let analysis = fault.split('-').next().unwrap();
        let hit = first_catch(fault);
        *caught_by_analysis.entry(analysis).or_default() |= hit.is_some();
        if matches!(fault, "de-ignore-release" | "lo-ignore-unlock") {
            required &= hit.is_some();
        }
        parts.push(match hit {
            Some((seed, what, acc)) => format!("{fault}: {what} fails at seed {seed} ({acc})"),
            None => format!("{fault}: not caught"),
        });
    }
    let all = caught_by_analysis.values().all(|&c| c);
    outcome(required && all, parts.join("; "))
}

fn run_cli(args: &[&str]) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_racetrim"))
        .args(args)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .output()
        .expect("binary runs");
    (out.stdout, out.status.success())
}

fn determinism() -> Outcome {
    let runs: &[&[&str]] = &[
        &["analyze", "programs/fig1.mini"],
        &["analyze", "--json", "programs/fig1.mini"],
        &["analyze", "programs/fig3.mini"],
        &["simulate", "--seed", "7", "--samples", "25", "programs/fig1.mini"],
        &["simulate", "--seed", "7", "--samples", "25", "--json", "programs/fig1.mini"],
        &["simulate", "--exhaustive", "--max-loop-iters", "1", "programs/fig3.mini"],
    ];
    let mut differ = Vec::new();
    for args in runs {
        let (a, b) = (run_cli(args), run_cli(args));
        if a != b || !a.1 || a.0.is_empty() {
            differ.push(args.join(" "));
        }
    }
    let detail = if differ.is_empty() {
        format!("{} command lines identical across two runs", runs.len())
    } else {
        format!("differ: {}", differ.join("; "))
    };
    outcome(differ.is_empty(), detail)
}

fn gap_demo() -> Outcome {
    let p = parse(FIG1).unwrap();
    let r = run_pipeline(&p, &PipelineConfig::default());
    let (_, g) = gap(&p, &r, &OracleConfig::default());
    outcome(
        g.gap > 0.0,
        format!(
            "gap {:.4}: {} of {} instrumented, {} flagged by the tracer, {} instrumented but never flagged",
            g.gap, g.final_instrumented, g.q_orig, g.tracer, g.final_not_traced
        ),
    )
}

fn main() -> ExitCode {
    // The harness passes libtest flags; a filter argument that matches no
    // criterion runs nothing, which keeps `cargo test <name>` quiet.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "fig1 golden", fig1_golden());
    report(2, "fig3 golden", fig3_golden());
    let corpus = run_corpus();
    report(3, "safety soundness", safety_criterion(&corpus));
    report(4, "weak sufficiency", weak_criterion(&corpus));
    report(5, "oracle cross-checks", cross_checks(&corpus));
    report(6, "fault injection", fault_injection());
    report(7, "determinism", determinism());
    report(8, "gap", gap_demo());
    let failed: Vec<_> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| n.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria PASS", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL ({})", failed.join(", "));
        ExitCode::FAILURE
    }
}
