// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use serde::Serialize;

use super::{Analysis, PipelineConfig, Report, Verdict};
use crate::ir::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Serialize)]
struct AccessEntry {
    id: String,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    by: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
}

#[derive(Serialize)]
struct Metrics {
    q_orig: usize,
    q_opt: usize,
    sir: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    accesses: Vec<AccessEntry>,
    metrics: Metrics,
    config: &'a PipelineConfig,
}

pub fn emit_report(p: &Program, r: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let accesses = r
                .verdicts
                .iter()
                .map(|(a, v)| match v {
                    Verdict::Instrumented => {
                        AccessEntry { id: a.render(p), verdict: "instrumented", by: None, witness: None }
                    }
                    Verdict::Eliminated { by, witness } => AccessEntry {
                        id: a.render(p),
                        verdict: "eliminated",
                        by: Some(by.name()),
                        witness: witness.map(|w| w.render(p)),
                    },
                })
                .collect();
            let doc = JsonReport {
                accesses,
                metrics: Metrics { q_orig: r.q_orig(), q_opt: r.q_opt(), sir: r.sir() },
                config: &r.config,
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<12} {:>10}", "analysis", "eliminated");
            for a in Analysis::ALL {
                let n = r.eliminated_by(a).len();
                let shown = if r.config.enabled(a) { n.to_string() } else { "off".to_string() };
                let _ = writeln!(s, "{:<12} {:>10}", a.name(), shown);
            }
            let _ = writeln!(s, "{:<12} {:>10}", "instrumented", r.q_opt());
            let _ = writeln!(s, "{:<12} {:>10}", "total", r.q_orig());
            let _ = writeln!(s, "sir {:.4}", r.sir());
            s.push('\n');
            let width = r.verdicts.keys().map(|a| a.render(p).len()).max().unwrap_or(0).max(6);
            for (a, v) in &r.verdicts {
                let what = match v {
                    Verdict::Instrumented => "instrumented".to_string(),
                    Verdict::Eliminated { by, witness: None } => by.name().to_string(),
                    Verdict::Eliminated { by, witness: Some(w) } => format!("{} (witness {})", by.name(), w.render(p)),
                };
                let _ = writeln!(s, "{:<width$}  {what}", a.render(p));
            }
            s
        }
    }
}
