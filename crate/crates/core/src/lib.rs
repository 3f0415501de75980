// SPDX-License-Identifier: Apache-2.0

//! Static reduction of data-race instrumentation for a small concurrent
//! language, plus an interleaving oracle that checks the reduction.

pub mod ir;
pub mod pipeline;
pub mod facts;
pub mod faults;
pub mod redundancy;
pub mod safety;
pub mod oracle;
pub mod gen;
