// SPDX-License-Identifier: Apache-2.0

//! The mini-language: program representation, parser, printer and CFG views.
//!
//! Everything is index based. Names are kept only for diagnostics, printing,
//! and for rendering [`AccessId`]s in reports.

mod cfg;
mod parser;
mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cfg::{rpo_from as cfg_rpo, Cfg, CfgWarning};
pub use parser::{parse, FrontendError};
pub use printer::print_program;

pub type FuncId = usize;
pub type BlockId = usize;
pub type RegId = usize;
pub type LockId = usize;
pub type GlobalId = usize;
pub type LocalId = usize;
pub type ExternId = usize;

/// A global or local variable declaration. `fields` is `Some` for aggregates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub fields: Option<Vec<String>>,
}

impl VarDecl {
    pub fn is_aggregate(&self) -> bool {
        self.fields.is_some()
    }

    pub fn field_index(&self, field: &str) -> Option<usize> {
        self.fields.as_ref()?.iter().position(|f| f == field)
    }

    pub fn field_count(&self) -> usize {
        self.fields.as_ref().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    Global(GlobalId),
    Local(LocalId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Callee {
    Func(FuncId),
    Extern(ExternId),
    /// Call through a function pointer held in a register.
    Dynamic(RegId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Lock(LockId),
    Unlock(LockId),
    Call {
        dst: Option<RegId>,
        callee: Callee,
        args: Vec<RegId>,
    },
    Compute {
        dst: RegId,
        srcs: Vec<RegId>,
    },
    Create(FuncId),
    Read {
        dst: RegId,
        addr: RegId,
    },
    Write {
        addr: RegId,
        src: RegId,
    },
    AddrOf {
        dst: RegId,
        var: VarRef,
        field: Option<usize>,
    },
    AddrOfFunc {
        dst: RegId,
        func: FuncId,
    },
}

impl Instr {
    pub fn access_mode(&self) -> Option<AccessMode> {
        match self {
            Instr::Read { .. } => Some(AccessMode::Read),
            Instr::Write { .. } => Some(AccessMode::Write),
            _ => None,
        }
    }

    /// Register holding the accessed address, for reads and writes.
    pub fn address_register(&self) -> Option<RegId> {
        match self {
            Instr::Read { addr, .. } | Instr::Write { addr, .. } => Some(*addr),
            _ => None,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Lock(_) => "lock",
            Instr::Unlock(_) => "unlock",
            Instr::Call { .. } => "call",
            Instr::Compute { .. } => "op",
            Instr::Create(_) => "create",
            Instr::Read { .. } => "read",
            Instr::Write { .. } => "write",
            Instr::AddrOf { .. } => "addr",
            Instr::AddrOfFunc { .. } => "faddr",
        }
    }
}

/// Edge guards are kept verbatim and never interpreted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Goto(BlockId),
    Branch { guard: String, targets: Vec<BlockId> },
    Return(Option<RegId>),
}

impl Terminator {
    pub fn successors(&self) -> &[BlockId] {
        match self {
            Terminator::Goto(b) => std::slice::from_ref(b),
            Terminator::Branch { targets, .. } => targets,
            Terminator::Return(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    /// Formals are the first `formals.len()` registers.
    pub formals: Vec<RegId>,
    pub registers: Vec<String>,
    pub locals: Vec<VarDecl>,
    /// Block 0 is the entry block.
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub const ENTRY: BlockId = 0;

    pub fn arity(&self) -> usize {
        self.formals.len()
    }

    pub fn exit_blocks(&self) -> Vec<BlockId> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| matches!(b.term, Terminator::Return(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn instrs(&self) -> impl Iterator<Item = (BlockId, usize, &Instr)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, block)| block.instrs.iter().enumerate().map(move |(i, ins)| (b, i, ins)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<VarDecl>,
    pub locks: Vec<String>,
    pub externs: Vec<String>,
    pub functions: Vec<Function>,
    pub main: FuncId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    Read,
    Write,
}

impl AccessMode {
    pub fn is_write(self) -> bool {
        self == AccessMode::Write
    }

    fn letter(self) -> char {
        match self {
            AccessMode::Read => 'r',
            AccessMode::Write => 'w',
        }
    }
}

/// Identity of one read or write instruction. Ordering follows declaration
/// order of functions, blocks and instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessId {
    pub func: FuncId,
    pub block: BlockId,
    pub index: usize,
    pub mode: AccessMode,
}

impl AccessId {
    pub fn render(&self, p: &Program) -> String {
        let f = &p.functions[self.func];
        format!(
            "{}:{}:{}:{}",
            f.name,
            f.blocks[self.block].label,
            self.index,
            self.mode.letter()
        )
    }
}

/// Position of an instruction, used as the instruction reference of a
/// dynamic event. `index == instrs.len()` denotes the terminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrRef {
    pub func: FuncId,
    pub block: BlockId,
    pub index: usize,
}

impl InstrRef {
    pub fn render(&self, p: &Program) -> String {
        let f = &p.functions[self.func];
        format!("{}:{}:{}", f.name, f.blocks[self.block].label, self.index)
    }
}

impl Program {
    pub fn main_fn(&self) -> &Function {
        &self.functions[self.main]
    }

    pub fn func_by_name(&self, name: &str) -> Option<FuncId> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn global_by_name(&self, name: &str) -> Option<GlobalId> {
        self.globals.iter().position(|g| g.name == name)
    }

    pub fn instr(&self, r: InstrRef) -> Option<&Instr> {
        self.functions[r.func].blocks[r.block].instrs.get(r.index)
    }

    /// All memory-access instructions in declaration order.
    pub fn accesses(&self) -> Vec<AccessId> {
        let mut out = Vec::new();
        for (fi, f) in self.functions.iter().enumerate() {
            for (b, i, ins) in f.instrs() {
                if let Some(mode) = ins.access_mode() {
                    out.push(AccessId {
                        func: fi,
                        block: b,
                        index: i,
                        mode,
                    });
                }
            }
        }
        out
    }

    pub fn access_at(&self, r: InstrRef) -> Option<AccessId> {
        let mode = self.instr(r)?.access_mode()?;
        Some(AccessId {
            func: r.func,
            block: r.block,
            index: r.index,
            mode,
        })
    }

    pub fn access_instr(&self, a: AccessId) -> &Instr {
        &self.functions[a.func].blocks[a.block].instrs[a.index]
    }

    /// Parse an access label of the form `func:block:index:r|w`.
    pub fn access_by_label(&self, label: &str) -> Option<AccessId> {
        let mut parts = label.split(':');
        let (f, b, i, m) = (parts.next()?, parts.next()?, parts.next()?, parts.next()?);
        if parts.next().is_some() {
            return None;
        }
        let func = self.func_by_name(f)?;
        let block = self.functions[func].blocks.iter().position(|bb| bb.label == b)?;
        let index: usize = i.parse().ok()?;
        let a = self.access_at(InstrRef { func, block, index })?;
        let want = match m {
            "r" => AccessMode::Read,
            "w" => AccessMode::Write,
            _ => return None,
        };
        (a.mode == want).then_some(a)
    }

    pub fn var_name(&self, func: FuncId, var: VarRef) -> &str {
        match var {
            VarRef::Global(g) => &self.globals[g].name,
            VarRef::Local(l) => &self.functions[func].locals[l].name,
        }
    }

    pub fn var_decl(&self, func: FuncId, var: VarRef) -> &VarDecl {
        match var {
            VarRef::Global(g) => &self.globals[g],
            VarRef::Local(l) => &self.functions[func].locals[l],
        }
    }

    /// Functions named as the target of some `create`.
    pub fn create_targets(&self) -> Vec<FuncId> {
        let mut out: Vec<FuncId> = self
            .functions
            .iter()
            .flat_map(|f| f.instrs())
            .filter_map(|(_, _, ins)| match ins {
                Instr::Create(t) => Some(*t),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}
