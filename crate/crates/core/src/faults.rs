// SPDX-License-Identifier: Apache-2.0

//! Deliberate analysis bugs, used to check that the oracle notices when an
//! analysis is wrong.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Faults {
    /// STC forgets that successors of a thread-creating block are multi-threaded.
    pub stc_ignore_successors: bool,
    /// SWMR accepts reads regardless of where the location is written.
    pub swmr_ignore_mt_writes: bool,
    /// The lockset analysis treats `unlock` as a no-op.
    pub lo_ignore_unlock: bool,
    /// Escape analysis forgets that storing a pointer can publish it.
    pub ea_ignore_stores: bool,
    /// Dominance elimination ignores release-like instructions on paths.
    pub de_ignore_release: bool,
    /// Post-dominance elimination ignores acquire-like instructions on paths.
    pub de_ignore_acquire: bool,
}

pub const FAULT_NAMES: &[&str] = &[
    "stc-ignore-successors",
    "swmr-ignore-mt-writes",
    "lo-ignore-unlock",
    "ea-ignore-stores",
    "de-ignore-release",
    "de-ignore-acquire",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFault(pub String);

impl fmt::Display for UnknownFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown fault `{}` (known: {})", self.0, FAULT_NAMES.join(", "))
    }
}

impl std::error::Error for UnknownFault {}

impl Faults {
    pub fn none() -> Faults {
        Faults::default()
    }

    pub fn enable(&mut self, name: &str) -> Result<(), UnknownFault> {
        let flag = match name {
            "stc-ignore-successors" => &mut self.stc_ignore_successors,
            "swmr-ignore-mt-writes" => &mut self.swmr_ignore_mt_writes,
            "lo-ignore-unlock" => &mut self.lo_ignore_unlock,
            "ea-ignore-stores" => &mut self.ea_ignore_stores,
            "de-ignore-release" => &mut self.de_ignore_release,
            "de-ignore-acquire" => &mut self.de_ignore_acquire,
            _ => return Err(UnknownFault(name.to_string())),
        };
        *flag = true;
        Ok(())
    }

    pub fn any(&self) -> bool {
        *self != Faults::default()
    }
}

impl FromStr for Faults {
    type Err = UnknownFault;

    fn from_str(s: &str) -> Result<Faults, UnknownFault> {
        let mut f = Faults::default();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            f.enable(name)?;
        }
        Ok(f)
    }
}
