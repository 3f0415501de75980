// SPDX-License-Identifier: Apache-2.0

//! The analysis cascade and its report.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use report::{ReportFormat, emit_report};

use crate::facts::Facts;
use crate::faults::Faults;
use crate::ir::{AccessId, Program};
use crate::redundancy::{apply_de_with, DeConfig, DeResult};
use crate::safety::{
    compute_escape_with, compute_lockset_with, compute_stc_with, compute_swmr_safe_with, ea_safe_accesses,
    lo_safe_accesses, stc_safe_accesses, EscapeResult, LockOwnership, StcResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Stc,
    Swmr,
    Lo,
    Ea,
    DeDom,
    DePostdom,
}

impl Analysis {
    pub const ALL: [Analysis; 6] =
        [Analysis::Stc, Analysis::Swmr, Analysis::Lo, Analysis::Ea, Analysis::DeDom, Analysis::DePostdom];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Stc => "stc",
            Analysis::Swmr => "swmr",
            Analysis::Lo => "lo",
            Analysis::Ea => "ea",
            Analysis::DeDom => "de_dom",
            Analysis::DePostdom => "de_postdom",
        }
    }

    pub fn is_safety(self) -> bool {
        matches!(self, Analysis::Stc | Analysis::Swmr | Analysis::Lo | Analysis::Ea)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PipelineConfig {
    pub stc: bool,
    pub swmr: bool,
    pub lo: bool,
    pub ea: bool,
    pub de: bool,
    pub de_postdom: bool,
    pub de_optimistic: bool,
    #[serde(skip_serializing_if = "Faults::is_clean")]
    pub faults: Faults,
}

impl Faults {
    fn is_clean(&self) -> bool {
        !self.any()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stc: true,
            swmr: true,
            lo: true,
            ea: true,
            de: true,
            de_postdom: true,
            de_optimistic: false,
            faults: Faults::none(),
        }
    }
}

impl PipelineConfig {
    pub fn de_config(&self) -> DeConfig {
        DeConfig { enable_postdom: self.de_postdom, optimistic_termination: self.de_optimistic }
    }

    pub fn enabled(&self, a: Analysis) -> bool {
        match a {
            Analysis::Stc => self.stc,
            Analysis::Swmr => self.swmr,
            Analysis::Lo => self.lo,
            Analysis::Ea => self.ea,
            Analysis::DeDom => self.de,
            Analysis::DePostdom => self.de && self.de_postdom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Instrumented,
    Eliminated { by: Analysis, witness: Option<AccessId> },
}

impl Verdict {
    pub fn eliminated_by(&self) -> Option<Analysis> {
        match self {
            Verdict::Instrumented => None,
            Verdict::Eliminated { by, .. } => Some(*by),
        }
    }
}

/// Per-access verdicts together with the intermediate results they came from.
#[derive(Debug, Clone)]
pub struct Report {
    pub config: PipelineConfig,
    pub verdicts: BTreeMap<AccessId, Verdict>,
    pub final_set: BTreeSet<AccessId>,
    /// What each safety analysis proves on its own, regardless of order.
    pub safe_sets: BTreeMap<Analysis, BTreeSet<AccessId>>,
    pub de: DeResult,
    pub stc: StcResult,
    pub lockset: LockOwnership,
    pub escape: EscapeResult,
}

impl Report {
    pub fn q_orig(&self) -> usize {
        self.verdicts.len()
    }

    pub fn q_opt(&self) -> usize {
        self.final_set.len()
    }

    /// Static instrumentation reduction; 0 for programs without accesses.
    pub fn sir(&self) -> f64 {
        if self.q_orig() == 0 {
            0.0
        } else {
            (self.q_orig() - self.q_opt()) as f64 / self.q_orig() as f64
        }
    }

    pub fn eliminated_by(&self, a: Analysis) -> BTreeSet<AccessId> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.eliminated_by() == Some(a))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn safety_eliminated(&self) -> BTreeSet<AccessId> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.eliminated_by().is_some_and(Analysis::is_safety))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn de_eliminated(&self) -> BTreeSet<AccessId> {
        self.verdicts
            .iter()
            .filter(|(_, v)| matches!(v.eliminated_by(), Some(Analysis::DeDom | Analysis::DePostdom)))
            .map(|(id, _)| *id)
            .collect()
    }
}

pub fn run_pipeline(p: &Program, config: &PipelineConfig) -> Report {
    let facts = Facts::compute(p);
    run_pipeline_with_facts(p, &facts, config)
}

pub fn run_pipeline_with_facts(p: &Program, facts: &Facts, config: &PipelineConfig) -> Report {
    let all: BTreeSet<AccessId> = p.accesses().into_iter().collect();
    run_cascade(p, facts, config, &all, &BTreeSet::new())
}

/// Run the cascade starting from `start` instead of every access. Accesses
/// outside `start` keep no verdict. `protected` accesses are never removed by
/// the redundancy pass.
pub fn run_cascade(
    p: &Program,
    facts: &Facts,
    config: &PipelineConfig,
    start: &BTreeSet<AccessId>,
    protected: &BTreeSet<AccessId>,
) -> Report {
    let faults = &config.faults;
    let stc = compute_stc_with(p, &facts.cg, faults);
    let lockset = compute_lockset_with(p, &facts.cg, &stc, &facts.pt, faults);
    let escape = compute_escape_with(p, &facts.cg, &facts.pt, faults);
    let mut safe_sets = BTreeMap::new();
    safe_sets.insert(Analysis::Stc, stc_safe_accesses(p, &stc));
    safe_sets.insert(Analysis::Swmr, compute_swmr_safe_with(p, &stc, &facts.pt, faults));
    safe_sets.insert(Analysis::Lo, lo_safe_accesses(p, &lockset, &facts.pt));
    safe_sets.insert(Analysis::Ea, ea_safe_accesses(p, &escape));

    let mut verdicts: BTreeMap<AccessId, Verdict> = start.iter().map(|a| (*a, Verdict::Instrumented)).collect();
    let mut surviving = start.clone();
    for a in [Analysis::Stc, Analysis::Swmr, Analysis::Lo, Analysis::Ea] {
        if !config.enabled(a) {
            continue;
        }
        let safe = &safe_sets[&a];
        surviving.retain(|x| {
            if safe.contains(x) {
                verdicts.insert(*x, Verdict::Eliminated { by: a, witness: None });
                false
            } else {
                true
            }
        });
    }
    let de = if config.de {
        apply_de_with(p, facts, &surviving, protected, &config.de_config(), faults)
    } else {
        DeResult { final_set: surviving.clone(), protected: protected.clone(), ..Default::default() }
    };
    for (a, w) in &de.dom_redundant {
        verdicts.insert(*a, Verdict::Eliminated { by: Analysis::DeDom, witness: Some(*w) });
    }
    for (a, w) in &de.postdom_redundant {
        verdicts.insert(*a, Verdict::Eliminated { by: Analysis::DePostdom, witness: Some(*w) });
    }
    Report {
        config: *config,
        verdicts,
        final_set: de.final_set.clone(),
        safe_sets,
        de,
        stc,
        lockset,
        escape,
    }
}
