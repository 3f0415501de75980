// SPDX-License-Identifier: Apache-2.0

//! Lexer, parser and name resolution for the mini-language.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::{
    BasicBlock, Callee, ExternId, FuncId, Function, GlobalId, Instr, LockId, Program, RegId,
    Terminator, VarDecl, VarRef,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("duplicate {kind} `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("unknown {kind} `{name}` at {line}:{col}")]
    UnknownIdentifier {
        kind: &'static str,
        name: String,
        line: usize,
        col: usize,
    },
    #[error("program has no `main` function")]
    MissingMain,
    #[error("`main` must not take formal parameters")]
    MainWithFormals,
    #[error("`main` cannot be called or have its address taken (at {line}:{col})")]
    MainNotCallable { line: usize, col: usize },
    #[error("thread entry `{name}` takes formal parameters")]
    CreateTargetWithFormals { name: String },
    #[error("block `{block}` in `{func}` has no terminator")]
    NoTerminator { func: String, block: String },
    #[error("function `{func}` has no blocks")]
    EmptyFunction { func: String },
    #[error("call to `{callee}` passes {given} arguments, expected {expected} (at {line}:{col})")]
    ArityMismatch {
        callee: String,
        given: usize,
        expected: usize,
        line: usize,
        col: usize,
    },
    #[error("`{var}` has no field `{field}` (at {line}:{col})")]
    InvalidField {
        var: String,
        field: String,
        line: usize,
        col: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Guard(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let bump = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump(&mut i, &mut line, &mut col);
            }
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump(&mut i, &mut line, &mut col);
            }
            out.push(Token { tok: Tok::Ident(s), line: tl, col: tc });
        } else if c == '[' {
            bump(&mut i, &mut line, &mut col);
            let mut depth = 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(FrontendError::Syntax {
                        line: tl,
                        col: tc,
                        msg: "unterminated guard".into(),
                    });
                };
                bump(&mut i, &mut line, &mut col);
                match ch {
                    '[' => depth += 1,
                    ']' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                s.push(ch);
            }
            out.push(Token { tok: Tok::Guard(s.trim().to_string()), line: tl, col: tc });
        } else if "{}();:,=*&.".contains(c) {
            bump(&mut i, &mut line, &mut col);
            out.push(Token { tok: Tok::Punct(c), line: tl, col: tc });
        } else {
            return Err(FrontendError::Syntax {
                line: tl,
                col: tc,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "global", "lock", "unlock", "extern", "fn", "regs", "locals", "create", "call", "write",
    "read", "op", "goto", "branch", "return",
];

#[derive(Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Clone)]
struct Name {
    text: String,
    pos: Pos,
}

/// A declared name with its field names, if it is an aggregate.
type VarItem = (Name, Option<Vec<Name>>);

enum RawCallee {
    Named(Name),
    Dynamic(Name),
}

enum RawInstr {
    Lock(Name),
    Unlock(Name),
    Create(Name),
    Call { dst: Option<Name>, callee: RawCallee, args: Vec<Name> },
    Compute { dst: Name, srcs: Vec<Name> },
    Read { dst: Name, addr: Name },
    Write { addr: Name, src: Name },
    AddrOf { dst: Name, var: Name, field: Option<Name> },
    AddrOfFunc { dst: Name, func: Name },
}

enum RawTerm {
    Goto(Name),
    Branch(String, Vec<Name>),
    Return(Option<Name>),
}

struct RawBlock {
    label: Name,
    instrs: Vec<RawInstr>,
    term: RawTerm,
}

struct RawFn {
    name: Name,
    formals: Vec<Name>,
    regs: Option<Vec<Name>>,
    locals: Vec<(Name, Option<Vec<Name>>)>,
    blocks: Vec<RawBlock>,
}

#[derive(Default)]
struct RawProgram {
    globals: Vec<(Name, Option<Vec<Name>>)>,
    locks: Vec<Name>,
    externs: Vec<Name>,
    fns: Vec<RawFn>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn here(&self) -> Pos {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => Pos { line: t.line, col: t.col },
            None => Pos { line: 1, col: 1 },
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        let p = self.here();
        Err(FrontendError::Syntax { line: p.line, col: p.col, msg: msg.into() })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok::Punct(p)) if *p == c)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), FrontendError> {
        if self.is_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<Name, FrontendError> {
        let pos = self.here();
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let text = s.clone();
                self.pos += 1;
                Ok(Name { text, pos })
            }
            Some(Tok::Ident(s)) => self.err(format!("keyword `{s}` used as a name")),
            _ => self.err("expected identifier"),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<Name>, FrontendError> {
        let mut out = vec![self.ident()?];
        while self.is_punct(',') {
            self.pos += 1;
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn var_item(&mut self) -> Result<(Name, Option<Vec<Name>>), FrontendError> {
        let name = self.ident()?;
        let fields = if self.is_punct('{') {
            self.pos += 1;
            let f = self.ident_list()?;
            self.expect_punct('}')?;
            Some(f)
        } else {
            None
        };
        Ok((name, fields))
    }

    fn var_items(&mut self) -> Result<Vec<VarItem>, FrontendError> {
        let mut out = vec![self.var_item()?];
        while self.is_punct(',') {
            self.pos += 1;
            out.push(self.var_item()?);
        }
        Ok(out)
    }

    fn args(&mut self) -> Result<Vec<Name>, FrontendError> {
        self.expect_punct('(')?;
        if self.is_punct(')') {
            self.pos += 1;
            return Ok(Vec::new());
        }
        let a = self.ident_list()?;
        self.expect_punct(')')?;
        Ok(a)
    }

    fn callee(&mut self) -> Result<RawCallee, FrontendError> {
        if self.is_punct('*') {
            self.pos += 1;
            Ok(RawCallee::Dynamic(self.ident()?))
        } else {
            Ok(RawCallee::Named(self.ident()?))
        }
    }

    fn program(&mut self) -> Result<RawProgram, FrontendError> {
        let mut p = RawProgram::default();
        while self.peek().is_some() {
            if self.is_kw("global") {
                self.pos += 1;
                p.globals.extend(self.var_items()?);
                self.expect_punct(';')?;
            } else if self.is_kw("lock") {
                self.pos += 1;
                p.locks.extend(self.ident_list()?);
                self.expect_punct(';')?;
            } else if self.is_kw("extern") {
                self.pos += 1;
                p.externs.extend(self.ident_list()?);
                self.expect_punct(';')?;
            } else if self.is_kw("fn") {
                self.pos += 1;
                p.fns.push(self.function()?);
            } else {
                return self.err("expected `global`, `lock`, `extern` or `fn`");
            }
        }
        Ok(p)
    }

    fn function(&mut self) -> Result<RawFn, FrontendError> {
        let name = self.ident()?;
        let formals = self.args()?;
        self.expect_punct('{')?;
        let mut regs: Option<Vec<Name>> = None;
        let mut locals = Vec::new();
        loop {
            if self.is_kw("regs") {
                self.pos += 1;
                regs.get_or_insert_with(Vec::new).extend(self.ident_list()?);
                self.expect_punct(';')?;
            } else if self.is_kw("locals") {
                self.pos += 1;
                locals.extend(self.var_items()?);
                self.expect_punct(';')?;
            } else {
                break;
            }
        }
        let mut blocks = Vec::new();
        while !self.is_punct('}') {
            if self.peek().is_none() {
                return self.err("unexpected end of input in function body");
            }
            blocks.push(self.block(&name.text)?);
        }
        self.pos += 1;
        Ok(RawFn { name, formals, regs, locals, blocks })
    }

    fn at_block_start(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()))
            && matches!(self.peek_at(1), Some(Tok::Punct(':')))
    }

    fn block(&mut self, func: &str) -> Result<RawBlock, FrontendError> {
        let label = self.ident()?;
        self.expect_punct(':')?;
        let mut instrs = Vec::new();
        loop {
            if self.is_punct('}') || self.peek().is_none() || self.at_block_start() {
                return Err(FrontendError::NoTerminator {
                    func: func.to_string(),
                    block: label.text,
                });
            }
            if self.is_kw("goto") {
                self.pos += 1;
                let t = self.ident()?;
                self.expect_punct(';')?;
                return Ok(RawBlock { label, instrs, term: RawTerm::Goto(t) });
            }
            if self.is_kw("branch") {
                self.pos += 1;
                let guard = match self.peek() {
                    Some(Tok::Guard(g)) => {
                        let g = g.clone();
                        self.pos += 1;
                        g
                    }
                    _ => String::new(),
                };
                let mut targets = vec![self.ident()?];
                while !self.is_punct(';') {
                    if self.is_punct(',') {
                        self.pos += 1;
                    }
                    targets.push(self.ident()?);
                }
                self.pos += 1;
                if targets.len() < 2 {
                    return self.err("`branch` needs at least two targets");
                }
                return Ok(RawBlock { label, instrs, term: RawTerm::Branch(guard, targets) });
            }
            if self.is_kw("return") {
                self.pos += 1;
                let r = if self.is_punct(';') { None } else { Some(self.ident()?) };
                self.expect_punct(';')?;
                return Ok(RawBlock { label, instrs, term: RawTerm::Return(r) });
            }
            instrs.push(self.instr()?);
        }
    }

    fn instr(&mut self) -> Result<RawInstr, FrontendError> {
        let ins = if self.is_kw("lock") {
            self.pos += 1;
            RawInstr::Lock(self.ident()?)
        } else if self.is_kw("unlock") {
            self.pos += 1;
            RawInstr::Unlock(self.ident()?)
        } else if self.is_kw("create") {
            self.pos += 1;
            RawInstr::Create(self.ident()?)
        } else if self.is_kw("call") {
            self.pos += 1;
            let callee = self.callee()?;
            let args = self.args()?;
            RawInstr::Call { dst: None, callee, args }
        } else if self.is_kw("write") {
            self.pos += 1;
            self.expect_punct('*')?;
            let addr = self.ident()?;
            self.expect_punct(',')?;
            let src = self.ident()?;
            RawInstr::Write { addr, src }
        } else {
            let dst = self.ident()?;
            self.expect_punct('=')?;
            if self.is_kw("read") {
                self.pos += 1;
                self.expect_punct('*')?;
                RawInstr::Read { dst, addr: self.ident()? }
            } else if self.is_kw("call") {
                self.pos += 1;
                let callee = self.callee()?;
                let args = self.args()?;
                RawInstr::Call { dst: Some(dst), callee, args }
            } else if self.is_kw("op") {
                self.pos += 1;
                RawInstr::Compute { dst, srcs: self.args()? }
            } else if self.is_punct('&') {
                self.pos += 1;
                if self.is_punct('&') {
                    self.pos += 1;
                    RawInstr::AddrOfFunc { dst, func: self.ident()? }
                } else {
                    let var = self.ident()?;
                    let field = if self.is_punct('.') {
                        self.pos += 1;
                        Some(self.ident()?)
                    } else {
                        None
                    };
                    RawInstr::AddrOf { dst, var, field }
                }
            } else {
                return self.err("expected `read`, `call`, `op` or `&` after `=`");
            }
        };
        self.expect_punct(';')?;
        Ok(ins)
    }
}

fn unknown(kind: &'static str, n: &Name) -> FrontendError {
    FrontendError::UnknownIdentifier {
        kind,
        name: n.text.clone(),
        line: n.pos.line,
        col: n.pos.col,
    }
}

fn check_unique<'a>(
    kind: &'static str,
    names: impl IntoIterator<Item = &'a str>,
    seen: &mut HashSet<String>,
) -> Result<(), FrontendError> {
    for n in names {
        if !seen.insert(n.to_string()) {
            return Err(FrontendError::DuplicateName { kind, name: n.to_string() });
        }
    }
    Ok(())
}

fn decl(name: &Name, fields: &Option<Vec<Name>>) -> Result<VarDecl, FrontendError> {
    let fields = match fields {
        None => None,
        Some(fs) => {
            let mut seen = HashSet::new();
            check_unique("field", fs.iter().map(|f| f.text.as_str()), &mut seen)?;
            Some(fs.iter().map(|f| f.text.clone()).collect())
        }
    };
    Ok(VarDecl { name: name.text.clone(), fields })
}

struct Scope<'a> {
    globals: &'a HashMap<String, GlobalId>,
    locks: &'a HashMap<String, LockId>,
    funcs: &'a HashMap<String, FuncId>,
    externs: &'a HashMap<String, ExternId>,
    arities: &'a [usize],
    main: Option<FuncId>,
}

struct FnResolver<'a> {
    scope: &'a Scope<'a>,
    strict: bool,
    regs: BTreeMap<String, RegId>,
    reg_names: Vec<String>,
    locals: HashMap<String, usize>,
    local_decls: &'a [VarDecl],
    global_decls: &'a [VarDecl],
    labels: HashMap<String, usize>,
}

impl FnResolver<'_> {
    fn reg(&mut self, n: &Name) -> Result<RegId, FrontendError> {
        if let Some(&r) = self.regs.get(&n.text) {
            return Ok(r);
        }
        if self.strict {
            return Err(unknown("register", n));
        }
        let id = self.reg_names.len();
        self.reg_names.push(n.text.clone());
        self.regs.insert(n.text.clone(), id);
        Ok(id)
    }

    fn regs(&mut self, ns: &[Name]) -> Result<Vec<RegId>, FrontendError> {
        ns.iter().map(|n| self.reg(n)).collect()
    }

    fn lock(&self, n: &Name) -> Result<LockId, FrontendError> {
        self.scope.locks.get(&n.text).copied().ok_or_else(|| unknown("lock", n))
    }

    fn func(&self, n: &Name) -> Result<FuncId, FrontendError> {
        let f = *self.scope.funcs.get(&n.text).ok_or_else(|| unknown("function", n))?;
        if Some(f) == self.scope.main {
            return Err(FrontendError::MainNotCallable { line: n.pos.line, col: n.pos.col });
        }
        Ok(f)
    }

    fn label(&self, n: &Name) -> Result<usize, FrontendError> {
        self.labels.get(&n.text).copied().ok_or_else(|| unknown("block", n))
    }

    fn instr(&mut self, raw: &RawInstr) -> Result<Instr, FrontendError> {
        Ok(match raw {
            RawInstr::Lock(l) => Instr::Lock(self.lock(l)?),
            RawInstr::Unlock(l) => Instr::Unlock(self.lock(l)?),
            RawInstr::Create(f) => {
                let fid = self.func(f)?;
                if self.scope.arities[fid] != 0 {
                    return Err(FrontendError::CreateTargetWithFormals { name: f.text.clone() });
                }
                Instr::Create(fid)
            }
            RawInstr::Call { dst, callee, args } => {
                let callee = match callee {
                    RawCallee::Dynamic(r) => Callee::Dynamic(self.reg(r)?),
                    RawCallee::Named(n) => {
                        if let Some(&e) = self.scope.externs.get(&n.text) {
                            Callee::Extern(e)
                        } else {
                            let f = self.func(n)?;
                            let expected = self.scope.arities[f];
                            if expected != args.len() {
                                return Err(FrontendError::ArityMismatch {
                                    callee: n.text.clone(),
                                    given: args.len(),
                                    expected,
                                    line: n.pos.line,
                                    col: n.pos.col,
                                });
                            }
                            Callee::Func(f)
                        }
                    }
                };
                let args = self.regs(args)?;
                let dst = dst.as_ref().map(|d| self.reg(d)).transpose()?;
                Instr::Call { dst, callee, args }
            }
            RawInstr::Compute { dst, srcs } => {
                let srcs = self.regs(srcs)?;
                Instr::Compute { dst: self.reg(dst)?, srcs }
            }
            RawInstr::Read { dst, addr } => {
                let addr = self.reg(addr)?;
                Instr::Read { dst: self.reg(dst)?, addr }
            }
            RawInstr::Write { addr, src } => Instr::Write { addr: self.reg(addr)?, src: self.reg(src)? },
            RawInstr::AddrOf { dst, var, field } => {
                let (vref, decl) = if let Some(&l) = self.locals.get(&var.text) {
                    (VarRef::Local(l), &self.local_decls[l])
                } else if let Some(&g) = self.scope.globals.get(&var.text) {
                    (VarRef::Global(g), &self.global_decls[g])
                } else {
                    return Err(unknown("variable", var));
                };
                let field = match field {
                    None => None,
                    Some(fname) => Some(decl.field_index(&fname.text).ok_or_else(|| {
                        FrontendError::InvalidField {
                            var: var.text.clone(),
                            field: fname.text.clone(),
                            line: fname.pos.line,
                            col: fname.pos.col,
                        }
                    })?),
                };
                Instr::AddrOf { dst: self.reg(dst)?, var: vref, field }
            }
            RawInstr::AddrOfFunc { dst, func } => {
                let f = self.func(func)?;
                Instr::AddrOfFunc { dst: self.reg(dst)?, func: f }
            }
        })
    }
}

/// Parse and validate a program in the mini-language.
pub fn parse(source: &str) -> Result<Program, FrontendError> {
    let toks = lex(source)?;
    let raw = Parser { toks, pos: 0 }.program()?;

    let mut seen = HashSet::new();
    check_unique("global", raw.globals.iter().map(|(n, _)| n.text.as_str()), &mut seen)?;
    let mut seen = HashSet::new();
    check_unique("lock", raw.locks.iter().map(|n| n.text.as_str()), &mut seen)?;
    let mut seen = HashSet::new();
    check_unique(
        "function",
        raw.fns.iter().map(|f| f.name.text.as_str()).chain(raw.externs.iter().map(|e| e.text.as_str())),
        &mut seen,
    )?;

    let globals: Vec<VarDecl> = raw.globals.iter().map(|(n, f)| decl(n, f)).collect::<Result<_, _>>()?;
    let global_ids: HashMap<String, GlobalId> =
        globals.iter().enumerate().map(|(i, g)| (g.name.clone(), i)).collect();
    let lock_ids: HashMap<String, LockId> =
        raw.locks.iter().enumerate().map(|(i, l)| (l.text.clone(), i)).collect();
    let func_ids: HashMap<String, FuncId> =
        raw.fns.iter().enumerate().map(|(i, f)| (f.name.text.clone(), i)).collect();
    let extern_ids: HashMap<String, ExternId> =
        raw.externs.iter().enumerate().map(|(i, e)| (e.text.clone(), i)).collect();
    let arities: Vec<usize> = raw.fns.iter().map(|f| f.formals.len()).collect();

    let main = *func_ids.get("main").ok_or(FrontendError::MissingMain)?;
    if arities[main] != 0 {
        return Err(FrontendError::MainWithFormals);
    }

    let scope = Scope {
        globals: &global_ids,
        locks: &lock_ids,
        funcs: &func_ids,
        externs: &extern_ids,
        arities: &arities,
        main: Some(main),
    };

    let mut functions = Vec::with_capacity(raw.fns.len());
    for rf in &raw.fns {
        if rf.blocks.is_empty() {
            return Err(FrontendError::EmptyFunction { func: rf.name.text.clone() });
        }
        let mut seen = HashSet::new();
        check_unique("register", rf.formals.iter().map(|n| n.text.as_str()), &mut seen)?;
        if let Some(regs) = &rf.regs {
            check_unique("register", regs.iter().map(|n| n.text.as_str()), &mut seen)?;
        }
        let mut seen = HashSet::new();
        check_unique("local", rf.locals.iter().map(|(n, _)| n.text.as_str()), &mut seen)?;
        for (n, _) in &rf.locals {
            if global_ids.contains_key(&n.text) {
                return Err(FrontendError::DuplicateName { kind: "variable", name: n.text.clone() });
            }
        }
        let mut seen = HashSet::new();
        check_unique("block", rf.blocks.iter().map(|b| b.label.text.as_str()), &mut seen)?;

        let locals: Vec<VarDecl> = rf.locals.iter().map(|(n, f)| decl(n, f)).collect::<Result<_, _>>()?;
        let mut reg_names: Vec<String> = rf.formals.iter().map(|n| n.text.clone()).collect();
        if let Some(regs) = &rf.regs {
            reg_names.extend(regs.iter().map(|n| n.text.clone()));
        }
        let regs = reg_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut res = FnResolver {
            scope: &scope,
            strict: rf.regs.is_some(),
            regs,
            reg_names,
            locals: locals.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect(),
            local_decls: &locals,
            global_decls: &globals,
            labels: rf.blocks.iter().enumerate().map(|(i, b)| (b.label.text.clone(), i)).collect(),
        };
        let mut blocks = Vec::with_capacity(rf.blocks.len());
        for rb in &rf.blocks {
            let instrs = rb.instrs.iter().map(|i| res.instr(i)).collect::<Result<Vec<_>, _>>()?;
            let term = match &rb.term {
                RawTerm::Goto(t) => Terminator::Goto(res.label(t)?),
                RawTerm::Branch(g, ts) => Terminator::Branch {
                    guard: g.clone(),
                    targets: ts.iter().map(|t| res.label(t)).collect::<Result<_, _>>()?,
                },
                RawTerm::Return(r) => Terminator::Return(r.as_ref().map(|r| res.reg(r)).transpose()?),
            };
            blocks.push(BasicBlock { label: rb.label.text.clone(), instrs, term });
        }
        functions.push(Function {
            name: rf.name.text.clone(),
            formals: (0..rf.formals.len()).collect(),
            registers: res.reg_names,
            locals,
            blocks,
        });
    }

    Ok(Program {
        globals,
        locks: raw.locks.iter().map(|l| l.text.clone()).collect(),
        externs: raw.externs.iter().map(|e| e.text.clone()).collect(),
        functions,
        main,
    })
}
