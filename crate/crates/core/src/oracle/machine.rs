// SPDX-License-Identifier: Apache-2.0

//! Concrete interpreter. Threads run sequentially consistent over a
//! zero-initialized memory. Only lock, unlock, create, read and write are
//! scheduling points; everything else runs eagerly right after them, so every
//! live thread always sits in front of its next visible operation.

use std::collections::BTreeMap;
use std::fmt;

use crate::facts::AbsLoc;
use crate::ir::{
    AccessId, AccessMode, Callee, FuncId, GlobalId, InstrRef, Instr, LocalId, LockId, Program, RegId, Terminator,
    VarRef,
};

pub type ThreadId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConcreteLoc {
    Global { global: GlobalId, field: Option<usize> },
    Local { thread: ThreadId, activation: usize, func: FuncId, local: LocalId, field: Option<usize> },
}

impl ConcreteLoc {
    pub fn abstraction(&self) -> AbsLoc {
        match *self {
            ConcreteLoc::Global { global, field } => AbsLoc::Global { global, field },
            ConcreteLoc::Local { func, local, field, .. } => AbsLoc::Local { func, local, field },
        }
    }

    pub fn render(&self, p: &Program) -> String {
        match *self {
            ConcreteLoc::Global { .. } => self.abstraction().render(p),
            ConcreteLoc::Local { thread, activation, .. } => {
                format!("{}@t{thread}.a{activation}", self.abstraction().render(p))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Ptr(ConcreteLoc),
    Func(FuncId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Lock(LockId),
    Unlock(LockId),
    Create(ThreadId),
    Read(ConcreteLoc),
    Write(ConcreteLoc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub thread: ThreadId,
    pub instr: InstrRef,
    pub kind: EventKind,
}

impl Event {
    pub fn location(&self) -> Option<ConcreteLoc> {
        match self.kind {
            EventKind::Read(l) | EventKind::Write(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, EventKind::Write(_))
    }

    pub fn access(&self) -> Option<AccessId> {
        let mode = match self.kind {
            EventKind::Read(_) => AccessMode::Read,
            EventKind::Write(_) => AccessMode::Write,
            _ => return None,
        };
        Some(AccessId { func: self.instr.func, block: self.instr.block, index: self.instr.index, mode })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Terminated,
    Deadlock,
    Fault,
    Bounded,
}

impl fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceStatus::Terminated => "terminated",
            TraceStatus::Deadlock => "deadlock",
            TraceStatus::Fault => "fault",
            TraceStatus::Bounded => "bounded",
        })
    }
}

/// A maximal execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub status: TraceStatus,
    pub threads: usize,
}

impl Trace {
    pub fn render(&self, p: &Program) -> String {
        let mut s = String::new();
        for (seq, e) in self.events.iter().enumerate() {
            let what = match e.kind {
                EventKind::Lock(l) => format!("lock {}", p.locks[l]),
                EventKind::Unlock(l) => format!("unlock {}", p.locks[l]),
                EventKind::Create(t) => format!("create t{t}"),
                EventKind::Read(l) => format!("read {}", l.render(p)),
                EventKind::Write(l) => format!("write {}", l.render(p)),
            };
            s.push_str(&format!("{seq} t{} {} {what}\n", e.thread, e.instr.render(p)));
        }
        s.push_str(&format!("status {}\n", self.status));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Bounds {
    pub max_events: usize,
    pub max_threads: usize,
    pub max_loop_iters: usize,
    pub max_call_depth: usize,
    /// Exploration stops after this many maximal traces.
    pub max_traces: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_events: 10_000, max_threads: 8, max_loop_iters: 3, max_call_depth: 16, max_traces: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Frame {
    func: FuncId,
    block: usize,
    index: usize,
    regs: Vec<Value>,
    activation: usize,
    ret_dst: Option<RegId>,
    visits: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ready,
    Done,
    Faulted,
    /// Stopped by a bound (loop, call depth or thread count).
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ThreadState {
    frames: Vec<Frame>,
    status: Status,
    next_activation: usize,
}

/// A visible operation a ready thread is about to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Lock(LockId),
    Unlock(LockId),
    Create(FuncId),
    Read(ConcreteLoc),
    Write(ConcreteLoc),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    threads: Vec<ThreadState>,
    mem: BTreeMap<ConcreteLoc, Value>,
    locks: Vec<Option<ThreadId>>,
    bounded: bool,
    /// Branch alternatives cut off by the loop bound.
    pub pruned: usize,
}

impl State {
    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn mark_bounded(&mut self) {
        self.bounded = true;
    }

    pub fn status(&self) -> TraceStatus {
        if self.bounded || self.threads.iter().any(|t| t.status == Status::Stuck) {
            TraceStatus::Bounded
        } else if self.threads.iter().any(|t| t.status == Status::Faulted) {
            TraceStatus::Fault
        } else if self.threads.iter().any(|t| t.status == Status::Ready) {
            TraceStatus::Deadlock
        } else {
            TraceStatus::Terminated
        }
    }
}

enum Local {
    Continue,
    Stop,
    Fork(Vec<usize>),
}

pub struct Machine<'p> {
    pub p: &'p Program,
    pub bounds: Bounds,
}

impl<'p> Machine<'p> {
    pub fn new(p: &'p Program, bounds: Bounds) -> Self {
        Machine { p, bounds }
    }

    fn new_frame(&self, func: FuncId, activation: usize, args: Vec<Value>, ret_dst: Option<RegId>) -> Frame {
        let f = &self.p.functions[func];
        let mut regs = vec![Value::Int(0); f.registers.len()];
        for (slot, v) in regs.iter_mut().zip(args) {
            *slot = v;
        }
        let mut visits = vec![0; f.blocks.len()];
        visits[0] = 1;
        Frame { func, block: 0, index: 0, regs, activation, ret_dst, visits }
    }

    /// Initial states: main positioned before its first visible operation.
    pub fn initial(&self) -> Vec<State> {
        let main = ThreadState {
            frames: vec![self.new_frame(self.p.main, 0, Vec::new(), None)],
            status: Status::Ready,
            next_activation: 1,
        };
        let s = State { threads: vec![main], mem: BTreeMap::new(), locks: vec![None; self.p.locks.len()], bounded: false, pruned: 0 };
        self.settle(s, 0)
    }

    pub fn next_op(&self, s: &State, t: ThreadId) -> Option<Op> {
        let th = s.threads.get(t)?;
        if th.status != Status::Ready {
            return None;
        }
        let fr = th.frames.last()?;
        let addr = |r: RegId| match fr.regs[r] {
            Value::Ptr(l) => l,
            _ => unreachable!("settle faults on non-pointer addresses"),
        };
        Some(match &self.p.functions[fr.func].blocks[fr.block].instrs[fr.index] {
            Instr::Lock(l) => Op::Lock(*l),
            Instr::Unlock(l) => Op::Unlock(*l),
            Instr::Create(f) => Op::Create(*f),
            Instr::Read { addr: a, .. } => Op::Read(addr(*a)),
            Instr::Write { addr: a, .. } => Op::Write(addr(*a)),
            _ => unreachable!("ready threads sit at visible operations"),
        })
    }

    pub fn enabled(&self, s: &State, t: ThreadId) -> bool {
        match self.next_op(s, t) {
            Some(Op::Lock(l)) => s.locks[l].is_none(),
            Some(_) => true,
            None => false,
        }
    }

    pub fn enabled_threads(&self, s: &State) -> Vec<ThreadId> {
        (0..s.threads.len()).filter(|&t| self.enabled(s, t)).collect()
    }

    /// Run thread `t` until it reaches a visible operation or stops. Branches
    /// fork the state; alternatives come back in successor order.
    fn settle(&self, s: State, t: ThreadId) -> Vec<State> {
        let mut out = Vec::new();
        let mut work = vec![s];
        while let Some(mut s) = work.pop() {
            loop {
                match self.local_step(&mut s, t) {
                    Local::Continue => {}
                    Local::Stop => {
                        out.push(s);
                        break;
                    }
                    Local::Fork(targets) => {
                        for &b in targets.iter().rev() {
                            let mut alt = s.clone();
                            self.enter(&mut alt, t, b);
                            work.push(alt);
                        }
                        break;
                    }
                }
            }
        }
        out
    }

    fn enter(&self, s: &mut State, t: ThreadId, b: usize) {
        let fr = s.threads[t].frames.last_mut().unwrap();
        fr.visits[b] += 1;
        fr.block = b;
        fr.index = 0;
    }

    /// Loop bounding. A branch may enter a block at most `max_loop_iters`
    /// times per activation, so a loop body runs at most that often and its
    /// exit stays open. A goto gets one more entry, which only matters for
    /// cycles that never branch.
    fn allowed(&self, s: &State, t: ThreadId, b: usize, via_branch: bool) -> bool {
        let fr = s.threads[t].frames.last().unwrap();
        let limit = self.bounds.max_loop_iters + usize::from(!via_branch);
        (fr.visits[b] as usize) < limit
    }

    fn stop(s: &mut State, t: ThreadId, status: Status) -> Local {
        s.threads[t].status = status;
        Local::Stop
    }

    fn local_step(&self, s: &mut State, t: ThreadId) -> Local {
        let p = self.p;
        let th = &mut s.threads[t];
        let depth = th.frames.len();
        let fr = th.frames.last_mut().unwrap();
        let func = &p.functions[fr.func];
        let block = &func.blocks[fr.block];
        if let Some(ins) = block.instrs.get(fr.index) {
            match ins {
                Instr::Read { addr, .. } | Instr::Write { addr, .. } => {
                    if !matches!(fr.regs[*addr], Value::Ptr(_)) {
                        return Self::stop(s, t, Status::Faulted);
                    }
                    Local::Stop
                }
                Instr::Unlock(l) => {
                    if s.locks[*l] != Some(t) {
                        return Self::stop(s, t, Status::Faulted);
                    }
                    Local::Stop
                }
                Instr::Lock(_) => Local::Stop,
                Instr::Create(_) => {
                    if s.threads.len() >= self.bounds.max_threads {
                        return Self::stop(s, t, Status::Stuck);
                    }
                    Local::Stop
                }
                Instr::Compute { dst, srcs } => {
                    let mut v = None;
                    let mut sum: i64 = 1;
                    for r in srcs {
                        match fr.regs[*r] {
                            Value::Int(i) => sum = sum.wrapping_add(i),
                            other => {
                                v.get_or_insert(other);
                            }
                        }
                    }
                    fr.regs[*dst] = v.unwrap_or(Value::Int(sum));
                    fr.index += 1;
                    Local::Continue
                }
                Instr::AddrOf { dst, var, field } => {
                    let loc = match var {
                        VarRef::Global(g) => ConcreteLoc::Global { global: *g, field: *field },
                        VarRef::Local(l) => ConcreteLoc::Local {
                            thread: t,
                            activation: fr.activation,
                            func: fr.func,
                            local: *l,
                            field: *field,
                        },
                    };
                    fr.regs[*dst] = Value::Ptr(loc);
                    fr.index += 1;
                    Local::Continue
                }
                Instr::AddrOfFunc { dst, func } => {
                    fr.regs[*dst] = Value::Func(*func);
                    fr.index += 1;
                    Local::Continue
                }
                Instr::Call { dst, callee, args } => {
                    let target = match callee {
                        Callee::Extern(_) => {
                            if let Some(d) = dst {
                                fr.regs[*d] = Value::Int(0);
                            }
                            fr.index += 1;
                            return Local::Continue;
                        }
                        Callee::Func(g) => *g,
                        Callee::Dynamic(r) => match fr.regs[*r] {
                            Value::Func(g) if p.functions[g].arity() == args.len() => g,
                            _ => return Self::stop(s, t, Status::Faulted),
                        },
                    };
                    if depth >= self.bounds.max_call_depth {
                        return Self::stop(s, t, Status::Stuck);
                    }
                    let vals: Vec<Value> = args.iter().map(|r| fr.regs[*r]).collect();
                    let dst = *dst;
                    let act = th.next_activation;
                    th.next_activation += 1;
                    let frame = self.new_frame(target, act, vals, dst);
                    s.threads[t].frames.push(frame);
                    Local::Continue
                }
            }
        } else {
            match &block.term {
                Terminator::Goto(b) => {
                    let b = *b;
                    if !self.allowed(s, t, b, false) {
                        return Self::stop(s, t, Status::Stuck);
                    }
                    self.enter(s, t, b);
                    Local::Continue
                }
                Terminator::Branch { targets, .. } => {
                    let mut uniq: Vec<usize> = Vec::new();
                    for &b in targets {
                        if !uniq.contains(&b) {
                            uniq.push(b);
                        }
                    }
                    let allowed: Vec<usize> = uniq.iter().copied().filter(|&b| self.allowed(s, t, b, true)).collect();
                    s.pruned += uniq.len() - allowed.len();
                    match allowed.len() {
                        0 => Self::stop(s, t, Status::Stuck),
                        1 => {
                            self.enter(s, t, allowed[0]);
                            Local::Continue
                        }
                        _ => Local::Fork(allowed),
                    }
                }
                Terminator::Return(r) => {
                    let v = r.map_or(Value::Int(0), |r| fr.regs[r]);
                    let done = th.frames.pop().unwrap();
                    match th.frames.last_mut() {
                        None => Self::stop(s, t, Status::Done),
                        Some(caller) => {
                            if let Some(d) = done.ret_dst {
                                caller.regs[d] = v;
                            }
                            caller.index += 1;
                            Local::Continue
                        }
                    }
                }
            }
        }
    }

    /// Execute the visible operation of enabled thread `t`. Returns the event
    /// and every resulting state (local branches may fork).
    pub fn step(&self, s: &State, t: ThreadId) -> (Event, Vec<State>) {
        let op = self.next_op(s, t).expect("thread is ready");
        let mut s = s.clone();
        let fr = s.threads[t].frames.last().unwrap();
        let instr = InstrRef { func: fr.func, block: fr.block, index: fr.index };
        let ins = &self.p.functions[fr.func].blocks[fr.block].instrs[fr.index];
        let kind = match op {
            Op::Lock(l) => {
                s.locks[l] = Some(t);
                EventKind::Lock(l)
            }
            Op::Unlock(l) => {
                s.locks[l] = None;
                EventKind::Unlock(l)
            }
            Op::Read(loc) => {
                let v = s.mem.get(&loc).copied().unwrap_or(Value::Int(0));
                if let Instr::Read { dst, .. } = ins {
                    s.threads[t].frames.last_mut().unwrap().regs[*dst] = v;
                }
                EventKind::Read(loc)
            }
            Op::Write(loc) => {
                if let Instr::Write { src, .. } = ins {
                    let v = s.threads[t].frames.last().unwrap().regs[*src];
                    s.mem.insert(loc, v);
                }
                EventKind::Write(loc)
            }
            Op::Create(f) => {
                let id = s.threads.len();
                s.threads.push(ThreadState {
                    frames: vec![self.new_frame(f, 0, Vec::new(), None)],
                    status: Status::Ready,
                    next_activation: 1,
                });
                EventKind::Create(id)
            }
        };
        s.threads[t].frames.last_mut().unwrap().index += 1;
        let event = Event { thread: t, instr, kind };
        let states = match kind {
            EventKind::Create(child) => self
                .settle(s, child)
                .into_iter()
                .flat_map(|c| self.settle(c, t))
                .collect(),
            _ => self.settle(s, t),
        };
        (event, states)
    }
}
