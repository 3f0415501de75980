// SPDX-License-Identifier: Apache-2.0

//! The four analyses that prove accesses race-free.

mod escape;
mod lockset;
mod stc;
mod swmr;

pub use escape::{compute_escape, compute_escape_kleene, compute_escape_with, ea_safe_accesses, EscapeResult};
pub use lockset::{compute_lockset, compute_lockset_with, lo_safe_accesses, LockOwnership};
pub use stc::{compute_stc, compute_stc_kleene, compute_stc_with, stc_safe_accesses, StcResult};
pub use swmr::{compute_swmr_safe, compute_swmr_safe_with};
