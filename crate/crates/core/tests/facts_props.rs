// SPDX-License-Identifier: Apache-2.0

use std::ops::ControlFlow;

use proptest::prelude::*;

use racetrim_core::facts::{compute_dominance, Facts};
use racetrim_core::gen::{generate, GenConfig};
use racetrim_core::ir::{parse, print_program, Cfg};
use racetrim_core::oracle::{enumerate_traces, Bounds, Strategy};
use racetrim_core::safety::{compute_escape, compute_escape_kleene, compute_stc, compute_stc_kleene};

/// Terminator choice per block: 0 = return, 1 = goto, 2 = branch.
fn cfg_source(terms: &[(u8, usize, usize)]) -> String {
    let n = terms.len();
    let mut s = String::from("fn main() {\n");
    for (i, &(k, x, y)) in terms.iter().enumerate() {
        let t = match k {
            0 => "return;".to_string(),
            1 => format!("goto b{};", x % n),
            _ => format!("branch b{} b{};", x % n, y % n),
        };
        s.push_str(&format!("  b{i}:\n    {t}\n"));
    }
    s.push_str("}\n");
    s
}

/// Does every simple path from `from` to `to` pass through `via`?
/// `None` when no path exists.
fn all_paths_through(succs: &[Vec<usize>], from: usize, to: usize, via: usize) -> Option<bool> {
    fn go(succs: &[Vec<usize>], cur: usize, to: usize, via: usize, seen: &mut Vec<bool>, hit: bool, out: &mut Option<bool>) {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dominance_matches_path_enumeration(terms in prop::collection::vec((0u8..3, 0usize..8, 0usize..8), 1..=8)) {
        let p = parse(&cfg_source(&terms)).unwrap();
        let cfg = Cfg::new(p.main_fn());
        let d = compute_dominance(&cfg);
        let n = terms.len();
        for a in 0..n {
            for b in 0..n {
                let dom = if a == b { true } else { all_paths_through(&cfg.succs, 0, b, a).unwrap_or(false) };
                prop_assert_eq!(d.dominates(a, b), dom, "dom {} {}", a, b);
                let pdom = if a == b { true } else { all_paths_through(&cfg.succs, b, cfg.exit, a).unwrap_or(false) };
                prop_assert_eq!(d.postdominates(a, b), pdom, "postdom {} {}", a, b);
            }
        }
    }

    #[test]
    fn generated_programs_round_trip(seed in 0u64..100_000) {
        let p = generate(seed, GenConfig::default());
        let text = print_program(&p);
        let q = parse(&text).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(text, print_program(&q));
    }

    #[test]
    fn worklist_fixpoints_equal_kleene_iteration(seed in 0u64..100_000) {
        let p = generate(seed, GenConfig::default());
        let f = Facts::compute(&p);
        prop_assert_eq!(compute_stc(&p, &f.cg), compute_stc_kleene(&p, &f.cg));
        prop_assert_eq!(compute_escape(&p, &f.cg, &f.pt), compute_escape_kleene(&p, &f.cg, &f.pt));
    }
}

#[test]
fn fixtures_fixpoints_equal_kleene_iteration() {
    for src in [
        include_str!("../../../programs/fig1.mini"),
        include_str!("../../../programs/fig3.mini"),
        include_str!("../../../programs/fig4.mini"),
    ] {
        let p = parse(src).unwrap();
        let f = Facts::compute(&p);
        assert_eq!(compute_stc(&p, &f.cg), compute_stc_kleene(&p, &f.cg));
        assert_eq!(compute_escape(&p, &f.cg, &f.pt), compute_escape_kleene(&p, &f.cg, &f.pt));
    }
}

#[test]
fn points_to_covers_every_concrete_access() {
    for seed in 0..150 {
        let p = generate(seed, GenConfig::default());
        let f = Facts::compute(&p);
        enumerate_traces(&p, Bounds::default(), Strategy::Dpor, &mut |t| {
            for e in &t.events {
                if let (Some(a), Some(l)) = (e.access(), e.location()) {
                    assert!(
                        f.pt.locs_of(a).contains(&l.abstraction()),
                        "seed {seed}: {} touched {} outside its points-to set",
                        a.render(&p),
                        l.render(&p)
                    );
                }
            }
            ControlFlow::Continue(())
        });
    }
}
