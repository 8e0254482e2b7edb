// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for the synthesizable subset.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{parse_number, tokenize, TokKind, Token};
use super::preprocess::PreprocessedFile;
use super::{FrontendError, Span};

const RESERVED: &[&str] = &[
    "module",
    "endmodule",
    "input",
    "output",
    "inout",
    "wire",
    "reg",
    "tri",
    "assign",
    "always",
    "begin",
    "end",
    "if",
    "else",
    "case",
    "casex",
    "casez",
    "endcase",
    "default",
    "posedge",
    "negedge",
    "parameter",
    "localparam",
    "signed",
    "initial",
    "generate",
    "endgenerate",
    "function",
    "endfunction",
    "task",
    "endtask",
    "integer",
    "for",
    "while",
    "repeat",
    "forever",
    "and",
    "or",
    "xor",
    "xnor",
    "nand",
    "nor",
    "not",
    "buf",
];

/// Keywords that start constructs outside the supported subset.
const UNSUPPORTED_ITEMS: &[&str] = &[
    "initial",
    "generate",
    "genvar",
    "function",
    "task",
    "integer",
    "real",
    "realtime",
    "time",
    "event",
    "specify",
    "defparam",
    "supply0",
    "supply1",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "trireg",
    "wand",
    "wor",
    "always_comb",
    "always_ff",
    "always_latch",
    "logic",
    "bit",
    "primitive",
    "bufif0",
    "bufif1",
    "notif0",
    "notif1",
    "pullup",
    "pulldown",
    "nmos",
    "pmos",
    "cmos",
    "tran",
    "interface",
    "package",
    "typedef",
    "final",
];

const UNSUPPORTED_STMTS: &[&str] =
    &["for", "while", "repeat", "forever", "wait", "disable", "fork", "assign", "deassign", "force", "release"];

/// Parses one preprocessed text. Locations refer to lines of `text`.
pub fn parse(text: &str, file: &str) -> Result<Ast, FrontendError> {
    let mut ast = Ast { files: vec![file.to_owned()], modules: Vec::new() };
    parse_into(&mut ast, text, file, None)?;
    Ok(ast)
}

/// Parses preprocessed files into one AST, mapping locations back to the
/// original sources.
pub fn parse_files(files: &[PreprocessedFile]) -> Result<Ast, FrontendError> {
    let mut ast = Ast::default();
    for f in files {
        let ids: Vec<u32> = f.sources.iter().map(|s| file_id(&mut ast.files, s)).collect();
        let map: Vec<(u32, u32)> = f.line_map.iter().map(|&(s, l)| (ids[s], l)).collect();
        parse_into(&mut ast, &f.text, &f.path, Some(&map))?;
    }
    let mut seen = BTreeSet::new();
    for m in &ast.modules {
        if !seen.insert(m.name.as_str()) {
            return Err(FrontendError::DuplicateModule { name: m.name.clone() });
        }
    }
    Ok(ast)
}

fn file_id(files: &mut Vec<String>, name: &str) -> u32 {
    match files.iter().position(|f| f == name) {
        Some(i) => i as u32,
        None => {
            files.push(name.to_owned());
            (files.len() - 1) as u32
        }
    }
}

fn parse_into(ast: &mut Ast, text: &str, file: &str, map: Option<&[(u32, u32)]>) -> Result<(), FrontendError> {
    let own = file_id(&mut ast.files, file);
    let toks = tokenize(text).map_err(|e| {
        let loc = map_loc(map, own, e.line, e.col);
        FrontendError::Syntax {
            span: span_of(&ast.files, loc),
            expected: vec!["token".into()],
            found: e.found.to_string(),
        }
    })?;
    let mut p = Parser { toks, pos: 0, files: &ast.files, map, own };
    let mut modules = Vec::new();
    while !p.at_eof() {
        modules.push(p.module()?);
    }
    ast.modules.extend(modules);
    Ok(())
}

fn map_loc(map: Option<&[(u32, u32)]>, own: u32, line: u32, col: u32) -> Loc {
    match map.and_then(|m| m.get(line.wrapping_sub(1) as usize)) {
        Some(&(file, l)) => Loc { file, line: l, col },
        None => Loc { file: own, line, col },
    }
}

pub(crate) fn span_of(files: &[String], loc: Loc) -> Span {
    let file = files.get(loc.file as usize).cloned().unwrap_or_default();
    Span { file, line: loc.line, col: loc.col }
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    files: &'a [String],
    map: Option<&'a [(u32, u32)]>,
    own: u32,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser<'_> {
    fn peek(&self) -> &TokKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, k: usize) -> &TokKind {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].kind
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), TokKind::Eof)
    }

    fn loc(&self) -> Loc {
        let t = &self.toks[self.pos];
        map_loc(self.map, self.own, t.line, t.col)
    }

    fn span(&self, loc: Loc) -> Span {
        span_of(self.files, loc)
    }

    fn bump(&mut self) -> TokKind {
        let k = self.toks[self.pos].kind.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        k
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), TokKind::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), TokKind::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            TokKind::Ident(s) | TokKind::System(s) | TokKind::Number(s) => s.clone(),
            TokKind::Str(s) => format!("\"{s}\""),
            TokKind::Sym(s) => (*s).to_owned(),
            TokKind::Eof => "end of input".into(),
        }
    }

    fn err<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(FrontendError::Syntax {
            span: self.span(self.loc()),
            expected: expected.iter().map(|s| (*s).to_owned()).collect(),
            found: self.found(),
        })
    }

    fn unsupported<T>(&self, construct: &str) -> PResult<T> {
        Err(FrontendError::Unsupported { span: self.span(self.loc()), construct: construct.to_owned() })
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(&[s])
        }
    }

    fn expect_kw(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.err(&[s])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            TokKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.err(&["identifier"]),
        }
    }

    fn module(&mut self) -> PResult<ModuleDecl> {
        if let TokKind::Ident(k) = self.peek() {
            if k == "macromodule" || k == "primitive" {
                return self.unsupported(&k.clone());
            }
        }
        let loc = self.loc();
        self.expect_kw("module")?;
        let name = self.ident()?;
        let mut items = Vec::new();
        if self.eat_sym("#") {
            self.expect_sym("(")?;
            if !self.is_sym(")") {
                loop {
                    self.eat_kw("parameter");
                    self.eat_kw("signed");
                    if self.is_sym("[") {
                        self.range()?;
                    }
                    let ploc = self.loc();
                    let pname = self.ident()?;
                    self.expect_sym("=")?;
                    let value = self.expr()?;
                    items.push(Item::Param(ParamDecl { name: pname, value, local: false, loc: ploc }));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
        }
        let mut ports: Vec<Port> = Vec::new();
        let mut ansi = false;
        let mut header_names: Vec<(String, Loc)> = Vec::new();
        if self.eat_sym("(") {
            if self.is_kw("input") || self.is_kw("output") || self.is_kw("inout") {
                ansi = true;
                self.ansi_ports(&mut ports)?;
            } else if !self.is_sym(")") {
                loop {
                    if self.is_sym(".") {
                        return self.unsupported("explicit port expression");
                    }
                    let l = self.loc();
                    header_names.push((self.ident()?, l));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
        }
        self.expect_sym(";")?;

        let mut body_ports: BTreeMap<String, Port> = BTreeMap::new();
        while !self.eat_kw("endmodule") {
            if self.at_eof() {
                return self.err(&["endmodule"]);
            }
            self.item(&mut items, &mut body_ports, ansi)?;
        }

        if !ansi {
            for (n, l) in &header_names {
                match body_ports.remove(n) {
                    Some(p) => ports.push(p),
                    None => {
                        return Err(FrontendError::Syntax {
                            span: self.span(*l),
                            expected: vec![format!("direction declaration for port `{n}`")],
                            found: "endmodule".into(),
                        })
                    }
                }
            }
            if let Some((n, p)) = body_ports.into_iter().next() {
                return Err(FrontendError::Undeclared { span: self.span(p.loc), name: n });
            }
        }
        let mut module = ModuleDecl { name, ports, items, ansi, loc };
        resolve_identifiers(&mut module, self.files)?;
        Ok(module)
    }

    fn ansi_ports(&mut self, ports: &mut Vec<Port>) -> PResult<()> {
        let mut dir = Direction::Input;
        let mut kind = NetKind::Wire;
        let mut range: Option<Range> = None;
        loop {
            let declared = if self.eat_kw("input") {
                dir = Direction::Input;
                true
            } else if self.eat_kw("output") {
                dir = Direction::Output;
                true
            } else if self.eat_kw("inout") {
                dir = Direction::Inout;
                true
            } else {
                false
            };
            if declared {
                kind = NetKind::Wire;
                if self.eat_kw("reg") {
                    kind = NetKind::Reg;
                } else if self.is_kw("integer") || self.is_kw("logic") {
                    return self.unsupported(&self.found());
                } else {
                    self.eat_kw("wire");
                }
                self.eat_kw("signed");
                range = if self.is_sym("[") { Some(self.range()?) } else { None };
            }
            let loc = self.loc();
            let name = self.ident()?;
            ports.push(Port { name, dir, kind, range: range.clone(), loc });
            if !self.eat_sym(",") {
                return Ok(());
            }
        }
    }

    fn range(&mut self) -> PResult<Range> {
        self.expect_sym("[")?;
        let msb = self.expr()?;
        self.expect_sym(":")?;
        let lsb = self.expr()?;
        self.expect_sym("]")?;
        Ok(Range { msb, lsb })
    }

    fn item(&mut self, items: &mut Vec<Item>, body_ports: &mut BTreeMap<String, Port>, ansi: bool) -> PResult<()> {
        let loc = self.loc();
        let kw = match self.peek() {
            TokKind::Ident(s) => s.clone(),
            TokKind::Sym(";") => {
                self.bump();
                return Ok(());
            }
            _ => return self.err(&["module item"]),
        };
        if UNSUPPORTED_ITEMS.contains(&kw.as_str()) {
            return self.unsupported(&kw);
        }
        match kw.as_str() {
            "input" | "output" | "inout" => {
                if ansi {
                    return self.err(&["module item"]);
                }
                self.bump();
                let dir = match kw.as_str() {
                    "input" => Direction::Input,
                    "output" => Direction::Output,
                    _ => Direction::Inout,
                };
                let mut kind = NetKind::Wire;
                if self.eat_kw("reg") {
                    kind = NetKind::Reg;
                } else {
                    self.eat_kw("wire");
                }
                self.eat_kw("signed");
                let range = if self.is_sym("[") { Some(self.range()?) } else { None };
                loop {
                    let l = self.loc();
                    let name = self.ident()?;
                    body_ports.insert(name.clone(), Port { name, dir, kind, range: range.clone(), loc: l });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")
            }
            "wire" | "reg" | "tri" => {
                self.bump();
                let kind = if kw == "reg" { NetKind::Reg } else { NetKind::Wire };
                self.eat_kw("signed");
                let range = if self.is_sym("[") { Some(self.range()?) } else { None };
                loop {
                    let l = self.loc();
                    let name = self.ident()?;
                    if self.is_sym("[") {
                        return self.unsupported("memory array");
                    }
                    if let Some(p) = body_ports.get_mut(&name) {
                        // `output q; reg q;`
                        p.kind = kind;
                        if p.range.is_none() {
                            p.range = range.clone();
                        }
                    } else {
                        items.push(Item::Net(NetDecl { name: name.clone(), kind, range: range.clone(), loc: l }));
                    }
                    if self.eat_sym("=") {
                        if kind == NetKind::Reg {
                            return self.unsupported("reg initializer");
                        }
                        let rhs = self.expr()?;
                        items.push(Item::Assign(ContAssign { lhs: Expr::ident(name, l), rhs, loc: l }));
                    }
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")
            }
            "parameter" | "localparam" => {
                self.bump();
                self.eat_kw("signed");
                if self.is_sym("[") {
                    self.range()?;
                }
                loop {
                    let l = self.loc();
                    let name = self.ident()?;
                    self.expect_sym("=")?;
                    let value = self.expr()?;
                    items.push(Item::Param(ParamDecl { name, value, local: kw == "localparam", loc: l }));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")
            }
            "assign" => {
                self.bump();
                if self.is_sym("#") {
                    return self.unsupported("delay");
                }
                if self.is_sym("(") {
                    return self.unsupported("drive strength");
                }
                loop {
                    let l = self.loc();
                    let lhs = self.lvalue()?;
                    self.expect_sym("=")?;
                    let rhs = self.expr()?;
                    items.push(Item::Assign(ContAssign { lhs, rhs, loc: l }));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")
            }
            "always" => {
                self.bump();
                if !self.eat_sym("@") {
                    return self.unsupported("always without event control");
                }
                let sensitivity = self.sensitivity()?;
                let body = self.stmt()?;
                items.push(Item::Always(AlwaysBlock { sensitivity, body, loc }));
                Ok(())
            }
            _ => {
                if let Some(gate) = GateKind::from_keyword(&kw) {
                    self.bump();
                    return self.gates(gate, items);
                }
                if RESERVED.contains(&kw.as_str()) {
                    return self.err(&["module item"]);
                }
                self.instances(items)
            }
        }
    }

    fn sensitivity(&mut self) -> PResult<Sensitivity> {
        if self.eat_sym("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect_sym("(")?;
        if self.eat_sym("*") {
            self.expect_sym(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut list = Vec::new();
        loop {
            let edge = if self.eat_kw("posedge") {
                Edge::Posedge
            } else if self.eat_kw("negedge") {
                Edge::Negedge
            } else {
                Edge::Any
            };
            list.push((edge, self.expr()?));
            if !(self.eat_sym(",") || self.eat_kw("or")) {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(Sensitivity::List(list))
    }

    fn gates(&mut self, gate: GateKind, items: &mut Vec<Item>) -> PResult<()> {
        if self.is_sym("#") {
            return self.unsupported("gate delay");
        }
        if self.is_sym("(") && matches!(self.peek_at(1), TokKind::Ident(s) if s.ends_with('0') || s.ends_with('1')) {
            // (strong0, weak1) style drive strengths
            if matches!(self.peek_at(2), TokKind::Sym(",")) {
                return self.unsupported("drive strength");
            }
        }
        loop {
            let loc = self.loc();
            let name = if matches!(self.peek(), TokKind::Ident(_)) { Some(self.ident()?) } else { None };
            if self.is_sym("[") {
                return self.unsupported("instance array");
            }
            self.expect_sym("(")?;
            let mut terminals = vec![self.expr()?];
            while self.eat_sym(",") {
                terminals.push(self.expr()?);
            }
            self.expect_sym(")")?;
            if terminals.len() < 2 {
                return Err(FrontendError::Syntax {
                    span: self.span(loc),
                    expected: vec!["at least two gate terminals".into()],
                    found: format!("{}", terminals.len()),
                });
            }
            items.push(Item::Gate(GateInst { gate, name, terminals, loc }));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(";")
    }

    fn instances(&mut self, items: &mut Vec<Item>) -> PResult<()> {
        let module = self.ident()?;
        let params = if self.eat_sym("#") {
            self.expect_sym("(")?;
            let p = if self.is_sym(".") {
                let mut named = Vec::new();
                loop {
                    self.expect_sym(".")?;
                    let n = self.ident()?;
                    self.expect_sym("(")?;
                    let e = self.expr()?;
                    self.expect_sym(")")?;
                    named.push((n, e));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                ParamOverrides::Named(named)
            } else {
                let mut pos = vec![self.expr()?];
                while self.eat_sym(",") {
                    pos.push(self.expr()?);
                }
                ParamOverrides::Positional(pos)
            };
            self.expect_sym(")")?;
            Some(p)
        } else {
            None
        };
        loop {
            let loc = self.loc();
            let name = self.ident()?;
            if self.is_sym("[") {
                return self.unsupported("instance array");
            }
            self.expect_sym("(")?;
            let connections = if self.is_sym(")") {
                Connections::Named(Vec::new())
            } else if self.is_sym(".") {
                let mut named = Vec::new();
                loop {
                    if self.is_sym(".") && matches!(self.peek_at(1), TokKind::Sym("*")) {
                        return self.unsupported("wildcard port connection");
                    }
                    self.expect_sym(".")?;
                    let n = self.ident()?;
                    self.expect_sym("(")?;
                    let e = if self.is_sym(")") { None } else { Some(self.expr()?) };
                    self.expect_sym(")")?;
                    named.push((n, e));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                Connections::Named(named)
            } else {
                let mut pos = Vec::new();
                loop {
                    if self.is_sym(",") || self.is_sym(")") {
                        pos.push(None);
                    } else {
                        pos.push(Some(self.expr()?));
                    }
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                Connections::Positional(pos)
            };
            self.expect_sym(")")?;
            items.push(Item::Inst(ModuleInst {
                module: module.clone(),
                name,
                params: params.clone(),
                connections,
                loc,
            }));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(";")
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        match self.peek().clone() {
            TokKind::Sym(";") => {
                self.bump();
                Ok(Stmt::Null)
            }
            TokKind::Sym("#") => self.unsupported("delay"),
            TokKind::Sym("@") => self.unsupported("event control"),
            TokKind::System(s) => self.unsupported(&format!("system task {s}")),
            TokKind::Ident(k) if k == "begin" => {
                self.bump();
                if self.eat_sym(":") {
                    self.ident()?;
                }
                let mut v = Vec::new();
                while !self.eat_kw("end") {
                    if self.at_eof() {
                        return self.err(&["end"]);
                    }
                    v.push(self.stmt()?);
                }
                Ok(Stmt::Block(v))
            }
            TokKind::Ident(k) if k == "if" => {
                self.bump();
                self.expect_sym("(")?;
                let cond = self.expr()?;
                self.expect_sym(")")?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.eat_kw("else") { Some(Box::new(self.stmt()?)) } else { None };
                Ok(Stmt::If { cond, then_branch, else_branch, loc })
            }
            TokKind::Ident(k) if k == "case" || k == "casex" || k == "casez" => {
                self.bump();
                let kind = match k.as_str() {
                    "case" => CaseKind::Case,
                    "casex" => CaseKind::Casex,
                    _ => CaseKind::Casez,
                };
                self.expect_sym("(")?;
                let subject = self.expr()?;
                self.expect_sym(")")?;
                let mut arms = Vec::new();
                let mut default = None;
                while !self.eat_kw("endcase") {
                    if self.at_eof() {
                        return self.err(&["endcase"]);
                    }
                    if self.eat_kw("default") {
                        self.eat_sym(":");
                        default = Some(Box::new(self.stmt()?));
                        continue;
                    }
                    let mut labels = vec![self.expr()?];
                    while self.eat_sym(",") {
                        labels.push(self.expr()?);
                    }
                    self.expect_sym(":")?;
                    let body = self.stmt()?;
                    arms.push(CaseArm { labels, body });
                }
                Ok(Stmt::Case { kind, subject, arms, default, loc })
            }
            TokKind::Ident(k) if UNSUPPORTED_STMTS.contains(&k.as_str()) => self.unsupported(&k),
            _ => {
                let lhs = self.lvalue()?;
                let blocking = if self.eat_sym("=") {
                    true
                } else if self.eat_sym("<=") {
                    false
                } else {
                    return self.err(&["=", "<="]);
                };
                if self.is_sym("#") || self.is_sym("@") {
                    return self.unsupported("intra-assignment delay");
                }
                let rhs = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt::Assign { lhs, rhs, blocking, loc })
            }
        }
    }

    fn lvalue(&mut self) -> PResult<Expr> {
        let e = self.postfix()?;
        if is_lvalue(&e) {
            Ok(e)
        } else {
            Err(FrontendError::Syntax {
                span: self.span(e.loc),
                expected: vec!["assignable expression".into()],
                found: "expression".into(),
            })
        }
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if self.is_sym("?") {
            let loc = self.loc();
            self.bump();
            let a = self.expr()?;
            self.expect_sym(":")?;
            let b = self.expr()?;
            return Ok(Expr::new(ExprKind::Ternary(Box::new(cond), Box::new(a), Box::new(b)), loc));
        }
        Ok(cond)
    }

    fn binop(&self) -> Option<(BinaryOp, u8)> {
        let TokKind::Sym(s) = self.peek() else { return None };
        Some(match *s {
            "||" => (BinaryOp::LOr, 1),
            "&&" => (BinaryOp::LAnd, 2),
            "|" => (BinaryOp::Or, 3),
            "^" => (BinaryOp::Xor, 4),
            "~^" | "^~" => (BinaryOp::Xnor, 4),
            "&" => (BinaryOp::And, 5),
            "==" => (BinaryOp::Eq, 6),
            "!=" => (BinaryOp::Ne, 6),
            "===" => (BinaryOp::CaseEq, 6),
            "!==" => (BinaryOp::CaseNe, 6),
            "<" => (BinaryOp::Lt, 7),
            "<=" => (BinaryOp::Le, 7),
            ">" => (BinaryOp::Gt, 7),
            ">=" => (BinaryOp::Ge, 7),
            "<<" => (BinaryOp::Shl, 8),
            ">>" => (BinaryOp::Shr, 8),
            "<<<" => (BinaryOp::AShl, 8),
            ">>>" => (BinaryOp::AShr, 8),
            "+" => (BinaryOp::Add, 9),
            "-" => (BinaryOp::Sub, 9),
            "*" => (BinaryOp::Mul, 10),
            "/" => (BinaryOp::Div, 10),
            "%" => (BinaryOp::Mod, 10),
            "**" => (BinaryOp::Pow, 11),
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binop() {
            if prec < min_prec {
                break;
            }
            let loc = self.loc();
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let op = match self.peek() {
            TokKind::Sym("+") => UnaryOp::Plus,
            TokKind::Sym("-") => UnaryOp::Minus,
            TokKind::Sym("!") => UnaryOp::LNot,
            TokKind::Sym("~") => UnaryOp::Not,
            TokKind::Sym("&") => UnaryOp::RedAnd,
            TokKind::Sym("|") => UnaryOp::RedOr,
            TokKind::Sym("^") => UnaryOp::RedXor,
            TokKind::Sym("~&") => UnaryOp::RedNand,
            TokKind::Sym("~|") => UnaryOp::RedNor,
            TokKind::Sym("~^") | TokKind::Sym("^~") => UnaryOp::RedXnor,
            _ => return self.postfix(),
        };
        self.bump();
        let e = self.unary()?;
        Ok(Expr::new(ExprKind::Unary(op, Box::new(e)), loc))
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.is_sym("[") {
            let loc = self.loc();
            self.bump();
            let first = self.expr()?;
            let kind = if self.eat_sym(":") {
                Some(PartSelectKind::Range)
            } else if self.eat_sym("+:") {
                Some(PartSelectKind::Up)
            } else if self.eat_sym("-:") {
                Some(PartSelectKind::Down)
            } else {
                None
            };
            e = match kind {
                None => Expr::new(ExprKind::Index(Box::new(e), Box::new(first)), loc),
                Some(kind) => {
                    let second = self.expr()?;
                    Expr::new(
                        ExprKind::Slice { base: Box::new(e), kind, left: Box::new(first), right: Box::new(second) },
                        loc,
                    )
                }
            };
            self.expect_sym("]")?;
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        match self.peek().clone() {
            TokKind::Number(text) => {
                if text.contains('.') {
                    return self.unsupported("real literal");
                }
                self.bump();
                let (value, width) = parse_number(&text);
                Ok(Expr::new(ExprKind::Number { text, value, width }, loc))
            }
            TokKind::Ident(name) if !RESERVED.contains(&name.as_str()) => {
                self.bump();
                if self.is_sym("(") {
                    return self.unsupported("function call");
                }
                if self.is_sym(".") {
                    return self.unsupported("hierarchical reference");
                }
                Ok(Expr::ident(name, loc))
            }
            TokKind::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            TokKind::Sym("{") => {
                self.bump();
                let first = self.expr()?;
                if self.is_sym("{") {
                    self.bump();
                    let mut inner = vec![self.expr()?];
                    while self.eat_sym(",") {
                        inner.push(self.expr()?);
                    }
                    self.expect_sym("}")?;
                    self.expect_sym("}")?;
                    return Ok(Expr::new(ExprKind::Repeat(Box::new(first), inner), loc));
                }
                let mut items = vec![first];
                while self.eat_sym(",") {
                    items.push(self.expr()?);
                }
                self.expect_sym("}")?;
                Ok(Expr::new(ExprKind::Concat(items), loc))
            }
            TokKind::Str(_) => self.unsupported("string literal"),
            TokKind::System(s) => self.unsupported(&format!("system function {s}")),
            _ => self.err(&["expression"]),
        }
    }
}

fn is_lvalue(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Ident(_) => true,
        ExprKind::Index(b, _) | ExprKind::Slice { base: b, .. } => is_lvalue(b),
        ExprKind::Concat(v) => !v.is_empty() && v.iter().all(is_lvalue),
        _ => false,
    }
}

/// Checks that every identifier resolves to a port, net or parameter.
/// Undeclared nets on gate and instance terminals become implicit 1-bit wires.
fn resolve_identifiers(m: &mut ModuleDecl, files: &[String]) -> PResult<()> {
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let dup = |name: &str, loc: Loc, declared: &mut BTreeSet<String>| -> PResult<()> {
        if declared.insert(name.to_owned()) {
            Ok(())
        } else {
            Err(FrontendError::DuplicateDeclaration { span: span_of(files, loc), name: name.to_owned() })
        }
    };
    for p in &m.ports {
        dup(&p.name, p.loc, &mut declared)?;
    }
    for item in &m.items {
        match item {
            Item::Net(n) => dup(&n.name, n.loc, &mut declared)?,
            Item::Param(p) => dup(&p.name, p.loc, &mut declared)?,
            _ => {}
        }
    }
    let mut implicit: Vec<(String, Loc)> = Vec::new();
    {
        let mut check = |e: &Expr, allow_implicit: bool| -> PResult<()> {
            let mut res = Ok(());
            e.walk(&mut |x| {
                if let ExprKind::Ident(n) = &x.kind {
                    if res.is_ok() && !declared.contains(n) {
                        if allow_implicit {
                            if !implicit.iter().any(|(i, _)| i == n) {
                                implicit.push((n.clone(), x.loc));
                            }
                        } else {
                            res = Err(FrontendError::Undeclared { span: span_of(files, x.loc), name: n.clone() });
                        }
                    }
                }
            });
            res
        };
        for p in &m.ports {
            if let Some(r) = &p.range {
                check(&r.msb, false)?;
                check(&r.lsb, false)?;
            }
        }
        // Gate and instance terminals first so implicit nets are known to the rest.
        for item in &m.items {
            match item {
                Item::Gate(g) => {
                    for t in &g.terminals {
                        check(t, true)?;
                    }
                }
                Item::Inst(i) => match &i.connections {
                    Connections::Positional(v) => {
                        for e in v.iter().flatten() {
                            check(e, true)?;
                        }
                    }
                    Connections::Named(v) => {
                        for e in v.iter().filter_map(|(_, e)| e.as_ref()) {
                            check(e, true)?;
                        }
                    }
                },
                _ => {}
            }
        }
    }
    for (n, _) in &implicit {
        declared.insert(n.clone());
    }
    let mut check = |e: &Expr| -> PResult<()> {
        for n in e.idents() {
            if !declared.contains(n) {
                let mut loc = e.loc;
                e.walk(&mut |x| {
                    if x.as_ident() == Some(n) {
                        loc = x.loc;
                    }
                });
                return Err(FrontendError::Undeclared { span: span_of(files, loc), name: n.to_owned() });
            }
        }
        Ok(())
    };
    for item in &m.items {
        match item {
            Item::Net(n) => {
                if let Some(r) = &n.range {
                    check(&r.msb)?;
                    check(&r.lsb)?;
                }
            }
            Item::Param(p) => check(&p.value)?,
            Item::Assign(a) => {
                check(&a.lhs)?;
                check(&a.rhs)?;
            }
            Item::Always(a) => {
                if let Sensitivity::List(l) = &a.sensitivity {
                    for (_, e) in l {
                        check(e)?;
                    }
                }
                let mut res = Ok(());
                a.body.exprs(&mut |e| {
                    if res.is_ok() {
                        res = check(e);
                    }
                });
                res?;
            }
            Item::Inst(i) => {
                if let Some(p) = &i.params {
                    match p {
                        ParamOverrides::Positional(v) => v.iter().try_for_each(&mut check)?,
                        ParamOverrides::Named(v) => v.iter().try_for_each(|(_, e)| check(e))?,
                    }
                }
            }
            Item::Gate(_) => {}
        }
    }
    for (name, loc) in implicit {
        m.items.push(Item::Net(NetDecl { name, kind: NetKind::Wire, range: None, loc }));
    }
    Ok(())
}
