// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use racetrim_core::facts::Facts;
use racetrim_core::faults::Faults;
use racetrim_core::gen::{generate_source, GenConfig};
use racetrim_core::ir::{parse, Program};
use racetrim_core::oracle::{
    self, detect_races_offline, Bounds, Instrumented, OracleConfig, RaceJson, Source, Strategy, Trace,
};
use racetrim_core::pipeline::{emit_report, run_pipeline, PipelineConfig, Report, ReportFormat};

#[derive(Parser)]
#[command(name = "racetrim", version, about = "Static elimination of race-detector instrumentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analysis pipeline and print per-access verdicts.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        json: bool,
    },
    /// Execute the program and print its traces.
    Simulate {
        input: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        json: bool,
    },
    /// Check the pipeline's eliminations against enumerated executions.
    Verify {
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        json: bool,
    },
    /// Print call graph, points-to sets and dominator trees as JSON.
    DumpFacts { input: PathBuf },
    /// Compare the final instrumentation set with the dynamic tracer.
    Gap {
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        json: bool,
    },
    /// Print a random well-formed program.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum number of instructions.
        #[arg(long, default_value_t = 40)]
        size: usize,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    disable_stc: bool,
    #[arg(long)]
    disable_swmr: bool,
    #[arg(long)]
    disable_lo: bool,
    #[arg(long)]
    disable_ea: bool,
    /// Skip redundancy elimination.
    #[arg(long)]
    no_de: bool,
    /// Post-dominance elimination (on by default).
    #[arg(long, overrides_with = "no_de_postdom")]
    de_postdom: bool,
    #[arg(long)]
    no_de_postdom: bool,
    /// Assume loops and calls between an access and its post-dominating
    /// witness terminate.
    #[arg(long)]
    de_optimistic: bool,
    /// Comma-separated analysis faults, for testing the oracle.
    #[arg(long, value_name = "FAULTS")]
    inject_fault: Option<String>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let postdom = !self.no_de_postdom;
        if self.de_optimistic && (self.no_de || !postdom) {
            bail!("--de-optimistic requires post-dominance elimination (drop --no-de / --no-de-postdom)");
        }
        let faults: Faults = match &self.inject_fault {
            Some(s) => s.parse()?,
            None => Faults::none(),
        };
        Ok(PipelineConfig {
            stc: !self.disable_stc,
            swmr: !self.disable_swmr,
            lo: !self.disable_lo,
            ea: !self.disable_ea,
            de: !self.no_de,
            de_postdom: postdom,
            de_optimistic: self.de_optimistic,
            faults,
        })
    }
}

#[derive(Args)]
struct OracleArgs {
    /// Enumerate every interleaving (the default).
    #[arg(long, conflicts_with = "samples")]
    exhaustive: bool,
    /// Run N randomly scheduled executions instead.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_loop_iters: usize,
    #[arg(long, default_value_t = 10_000)]
    max_events: usize,
    #[arg(long, default_value_t = 8)]
    max_threads: usize,
    #[arg(long, default_value_t = 200_000)]
    max_traces: usize,
    /// Plain enumeration of every schedule, without partial-order reduction.
    #[arg(long)]
    naive: bool,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        let bounds = Bounds {
            max_events: self.max_events,
            max_threads: self.max_threads,
            max_loop_iters: self.max_loop_iters,
            max_traces: self.max_traces,
            ..Bounds::default()
        };
        let source = match self.samples {
            Some(n) => Source::Sampled { samples: n, seed: self.seed },
            None => Source::Exhaustive(if self.naive { Strategy::Dfs } else { Strategy::Dpor }),
        };
        OracleConfig { bounds, source }
    }
}

fn load(path: &PathBuf) -> Result<Program> {
    let src = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&src).with_context(|| format!("{}", path.display()))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TraceJson {
    index: usize,
    status: String,
    events: Vec<String>,
    races: Vec<RaceJson>,
}

fn simulate(p: &Program, cfg: &OracleConfig, as_json: bool) -> String {
    let mut text = String::new();
    let mut listed = Vec::new();
    let mut n = 0;
    let stats = oracle::for_each_trace(p, cfg, &mut |t: &Trace| {
        let races = detect_races_offline(t, Instrumented::All);
        if as_json {
            let rendered = t.render(p);
            let events = rendered.lines().filter(|l| !l.starts_with("status")).map(str::to_string).collect();
            listed.push(TraceJson {
                index: n,
                status: t.status.to_string(),
                events,
                races: races.iter().map(|r| RaceJson::new(p, r)).collect(),
            });
        } else {
            let _ = writeln!(text, "# trace {n}");
            text.push_str(&t.render(p));
            for r in &races {
                let _ = writeln!(text, "race {}", r.render(p));
            }
        }
        n += 1;
        ControlFlow::Continue(())
    });
    if as_json {
        #[derive(Serialize)]
        struct Out<'a> {
            oracle: &'a OracleConfig,
            exploration: oracle::ExploreStats,
            traces: Vec<TraceJson>,
        }
        json(&Out { oracle: cfg, exploration: stats, traces: listed })
    } else {
        let _ = writeln!(
            text,
            "# {} traces ({} bounded, {} deadlocked, {} faulted){}",
            stats.traces,
            stats.bounded,
            stats.deadlocked,
            stats.faulted,
            if stats.truncated { ", trace cap reached" } else { "" }
        );
        text
    }
}

fn verify_text(report: &Report, v: &oracle::Verification) -> String {
    let mut s = String::new();
    let e = &v.exploration;
    let _ = writeln!(
        s,
        "traces {} (bounded {}, deadlocked {}, faulted {}, pruned branches {}){}",
        e.traces,
        e.bounded,
        e.deadlocked,
        e.faulted,
        e.pruned_branches,
        if e.truncated { ", trace cap reached" } else { "" }
    );
    let sf = &v.safety;
    let _ = writeln!(
        s,
        "safety: {} ({} races, {} safety-eliminated accesses)",
        if sf.pass { "PASS" } else { "FAIL" },
        sf.races,
        report.safety_eliminated().len()
    );
    if let Some(c) = &sf.counterexample {
        let _ = writeln!(s, "  racing eliminated accesses: {}", sf.violating_accesses.join(", "));
        s.push_str(&indent(&c.render()));
    }
    let w = &v.weak_sufficiency;
    let _ = writeln!(
        s,
        "weak sufficiency: {} ({} checked, {} dom-covered, {} postdom-covered, {} vacuous, {} assumed terminating)",
        if w.pass { "PASS" } else { "FAIL" },
        w.checked,
        w.covered_dom,
        w.covered_postdom,
        w.vacuous_count,
        w.assumed_terminating
    );
    for vac in &w.vacuous {
        let _ = writeln!(s, "  vacuous in trace {} ({}): {} ~ {} on {}", vac.trace, vac.status, vac.race.a, vac.race.b, vac.race.loc);
    }
    if let Some(c) = &w.counterexample {
        s.push_str(&indent(&c.render()));
    }
    s
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("  {l}\n")).collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut out = String::new();
    let mut code = ExitCode::SUCCESS;
    match cli.command {
        Command::Analyze { input, pipeline, json: j } => {
            let p = load(&input)?;
            let r = run_pipeline(&p, &pipeline.config()?);
            out = emit_report(&p, &r, if j { ReportFormat::Json } else { ReportFormat::Text });
        }
        Command::Simulate { input, oracle: o, json: j } => {
            let p = load(&input)?;
            out = simulate(&p, &o.config(), j);
        }
        Command::Verify { input, pipeline, oracle: o, json: j } => {
            let p = load(&input)?;
            let r = run_pipeline(&p, &pipeline.config()?);
            let v = oracle::verify(&p, &r, &o.config());
            out = if j { json(&v) } else { verify_text(&r, &v) };
            if !v.pass() {
                code = ExitCode::from(2);
            }
        }
        Command::DumpFacts { input } => {
            let p = load(&input)?;
            out = json(&Facts::compute(&p).to_json(&p));
        }
        Command::Gap { input, pipeline, oracle: o, json: j } => {
            let p = load(&input)?;
            let r = run_pipeline(&p, &pipeline.config()?);
            let (tr, g) = oracle::gap(&p, &r, &o.config());
            if j {
                #[derive(Serialize)]
                struct Out {
                    #[serde(flatten)]
                    stats: oracle::GapStats,
                    tracer_accesses: Vec<String>,
                    final_not_traced_accesses: Vec<String>,
                }
                out = json(&Out {
                    tracer_accesses: tr.accesses.iter().map(|a| a.render(&p)).collect(),
                    final_not_traced_accesses: r.final_set.difference(&tr.accesses).map(|a| a.render(&p)).collect(),
                    stats: g,
                });
            } else {
                let _ = writeln!(out, "accesses        {}", g.q_orig);
                let _ = writeln!(out, "final set       {} ({:.3})", g.final_instrumented, g.final_fraction);
                let _ = writeln!(out, "tracer set      {} ({:.3})", g.tracer, g.tracer_fraction);
                let _ = writeln!(out, "final untraced  {}", g.final_not_traced);
                let _ = writeln!(out, "gap             {:.3}", g.gap);
                for a in r.final_set.difference(&tr.accesses) {
                    let _ = writeln!(out, "  {}", a.render(&p));
                }
            }
        }
        Command::Gen { seed, size } => {
            out = generate_source(seed, GenConfig { max_instrs: size });
        }
    }
    print!("{out}");
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
