// SPDX-License-Identifier: Apache-2.0

//! Single writer, multiple readers: reads of locations that are only ever
//! written before the first thread creation.

use std::collections::BTreeSet;

use crate::facts::PointsTo;
use crate::faults::Faults;
use crate::ir::{AccessId, AccessMode, Program};

use super::stc::StcResult;

pub fn compute_swmr_safe(p: &Program, stc: &StcResult, pt: &PointsTo) -> BTreeSet<AccessId> {
    compute_swmr_safe_with(p, stc, pt, &Faults::none())
}

pub fn compute_swmr_safe_with(
    p: &Program,
    stc: &StcResult,
    pt: &PointsTo,
    faults: &Faults,
) -> BTreeSet<AccessId> {
    p.accesses()
        .into_iter()
        .filter(|a| a.mode == AccessMode::Read)
        .filter(|a| {
            let locs = pt.locs_of(*a);
            !locs.is_empty()
                && locs.iter().all(|l| {
                    !pt.extern_exposed.contains(l)
                        && (faults.swmr_ignore_mt_writes
                            || pt.writes_to(l).all(|y| !stc.is_mt(p, y.func, y.block)))
                })
        })
        .collect()
}
