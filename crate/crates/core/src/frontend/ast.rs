// SPDX-License-Identifier: Apache-2.0

//! Syntax tree of the supported Verilog subset.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// Source location; `file` indexes [`Ast::files`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Loc {
    pub file: u32,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    /// Names of the files locations point into.
    pub files: Vec<String>,
    pub modules: Vec<ModuleDecl>,
}

impl Ast {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Wire,
    Reg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub name: String,
    pub dir: Direction,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub value: Expr,
    pub local: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContAssign {
    pub lhs: Expr,
    pub rhs: Expr,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Posedge,
    Negedge,
    Any,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sensitivity {
    Star,
    List(Vec<(Edge, Expr)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlwaysBlock {
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Case,
    Casex,
    Casez,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    Assign { lhs: Expr, rhs: Expr, blocking: bool, loc: Loc },
    If { cond: Expr, then_branch: Box<Stmt>, else_branch: Option<Box<Stmt>>, loc: Loc },
    Case { kind: CaseKind, subject: Expr, arms: Vec<CaseArm>, default: Option<Box<Stmt>>, loc: Loc },
    Null,
}

/// Built-in gate primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Xor,
    Xnor,
    Nand,
    Nor,
    Not,
    Buf,
}

impl GateKind {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "and" => Self::And,
            "or" => Self::Or,
            "xor" => Self::Xor,
            "xnor" => Self::Xnor,
            "nand" => Self::Nand,
            "nor" => Self::Nor,
            "not" => Self::Not,
            "buf" => Self::Buf,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::And => "and",
            Self::Or => "or",
            Self::Xor => "xor",
            Self::Xnor => "xnor",
            Self::Nand => "nand",
            Self::Nor => "nor",
            Self::Not => "not",
            Self::Buf => "buf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateInst {
    pub gate: GateKind,
    pub name: Option<String>,
    /// Terminals in declaration order; outputs first.
    pub terminals: Vec<Expr>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Connections {
    Positional(Vec<Option<Expr>>),
    Named(Vec<(String, Option<Expr>)>),
}

impl Connections {
    pub fn len(&self) -> usize {
        match self {
            Self::Positional(v) => v.len(),
            Self::Named(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamOverrides {
    Positional(Vec<Expr>),
    Named(Vec<(String, Expr)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleInst {
    pub module: String,
    pub name: String,
    pub params: Option<ParamOverrides>,
    pub connections: Connections,
    pub loc: Loc,
}

/// Module items in source order.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Net(NetDecl),
    Param(ParamDecl),
    Assign(ContAssign),
    Always(AlwaysBlock),
    Gate(GateInst),
    Inst(ModuleInst),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleDecl {
    pub name: String,
    /// Ports in header order.
    pub ports: Vec<Port>,
    pub items: Vec<Item>,
    /// True when ports were declared in the header (ANSI style).
    pub ansi: bool,
    pub loc: Loc,
}

impl ModuleDecl {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn nets(&self) -> impl Iterator<Item = &NetDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Net(n) => Some(n),
            _ => None,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Param(p) => Some(p),
            _ => None,
        })
    }

    pub fn assigns(&self) -> impl Iterator<Item = &ContAssign> {
        self.items.iter().filter_map(|i| match i {
            Item::Assign(a) => Some(a),
            _ => None,
        })
    }

    pub fn always_blocks(&self) -> impl Iterator<Item = &AlwaysBlock> {
        self.items.iter().filter_map(|i| match i {
            Item::Always(a) => Some(a),
            _ => None,
        })
    }

    pub fn instances(&self) -> impl Iterator<Item = &ModuleInst> {
        self.items.iter().filter_map(|i| match i {
            Item::Inst(m) => Some(m),
            _ => None,
        })
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateInst> {
        self.items.iter().filter_map(|i| match i {
            Item::Gate(g) => Some(g),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Plus,
    Minus,
    Not,
    LNot,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Shl,
    Shr,
    AShl,
    AShr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    And,
    Or,
    Xor,
    Xnor,
    LAnd,
    LOr,
    /// Only produced by gate lowering.
    Nand,
    /// Only produced by gate lowering.
    Nor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartSelectKind {
    /// `[msb:lsb]`
    Range,
    /// `[base +: width]`
    Up,
    /// `[base -: width]`
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Ident(String),
    /// Literal as written (e.g. `4'b1010`), with its value when it has no x/z digits.
    Number {
        text: String,
        value: Option<u128>,
        width: Option<u32>,
    },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Repeat(Box<Expr>, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice {
        base: Box<Expr>,
        kind: PartSelectKind,
        left: Box<Expr>,
        right: Box<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, loc: Loc) -> Self {
        Self { kind, loc }
    }

    pub fn ident(name: impl Into<String>, loc: Loc) -> Self {
        Self::new(ExprKind::Ident(name.into()), loc)
    }

    pub fn number(value: u128, loc: Loc) -> Self {
        Self::new(ExprKind::Number { text: alloc::format!("{value}"), value: Some(value), width: None }, loc)
    }

    pub fn as_ident(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(s) => Some(s),
            _ => None,
        }
    }

    /// Visits every sub-expression, parents before children.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Ident(_) | ExprKind::Number { .. } => {}
            ExprKind::Unary(_, a) => a.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Ternary(a, b, c) => {
                a.walk(f);
                b.walk(f);
                c.walk(f);
            }
            ExprKind::Concat(v) => v.iter().for_each(|e| e.walk(f)),
            ExprKind::Repeat(n, v) => {
                n.walk(f);
                v.iter().for_each(|e| e.walk(f));
            }
            ExprKind::Slice { base, left, right, .. } => {
                base.walk(f);
                left.walk(f);
                right.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Ident(_) | ExprKind::Number { .. } => {}
            ExprKind::Unary(_, a) => a.walk_mut(f),
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            ExprKind::Ternary(a, b, c) => {
                a.walk_mut(f);
                b.walk_mut(f);
                c.walk_mut(f);
            }
            ExprKind::Concat(v) => v.iter_mut().for_each(|e| e.walk_mut(f)),
            ExprKind::Repeat(n, v) => {
                n.walk_mut(f);
                v.iter_mut().for_each(|e| e.walk_mut(f));
            }
            ExprKind::Slice { base, left, right, .. } => {
                base.walk_mut(f);
                left.walk_mut(f);
                right.walk_mut(f);
            }
        }
    }

    /// Identifiers read by this expression.
    pub fn idents(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ExprKind::Ident(s) = &e.kind {
                out.push(s.as_str());
            }
        });
        out
    }
}

impl Stmt {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block(v) => v.iter().for_each(|s| s.walk(f)),
            Stmt::If { then_branch, else_branch, .. } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                arms.iter().for_each(|a| a.body.walk(f));
                if let Some(d) = default {
                    d.walk(f);
                }
            }
            Stmt::Assign { .. } | Stmt::Null => {}
        }
    }

    /// Applies `f` to every expression in the statement tree.
    pub fn exprs_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        match self {
            Stmt::Block(v) => v.iter_mut().for_each(|s| s.exprs_mut(f)),
            Stmt::Assign { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                f(cond);
                then_branch.exprs_mut(f);
                if let Some(e) = else_branch {
                    e.exprs_mut(f);
                }
            }
            Stmt::Case { subject, arms, default, .. } => {
                f(subject);
                for a in arms {
                    a.labels.iter_mut().for_each(&mut *f);
                    a.body.exprs_mut(f);
                }
                if let Some(d) = default {
                    d.exprs_mut(f);
                }
            }
            Stmt::Null => {}
        }
    }

    pub fn exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            Stmt::Block(v) => v.iter().for_each(|s| s.exprs(f)),
            Stmt::Assign { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                f(cond);
                then_branch.exprs(f);
                if let Some(e) = else_branch {
                    e.exprs(f);
                }
            }
            Stmt::Case { subject, arms, default, .. } => {
                f(subject);
                for a in arms {
                    a.labels.iter().for_each(&mut *f);
                    a.body.exprs(f);
                }
                if let Some(d) = default {
                    d.exprs(f);
                }
            }
            Stmt::Null => {}
        }
    }
}

/// Base signal written by an lvalue expression (`x`, `x[3]`, `x[3:0]`), or
/// every base of a concatenation lvalue.
pub fn lvalue_targets(e: &Expr) -> Vec<&str> {
    match &e.kind {
        ExprKind::Ident(s) => alloc::vec![s.as_str()],
        ExprKind::Index(b, _) | ExprKind::Slice { base: b, .. } => lvalue_targets(b),
        ExprKind::Concat(v) => v.iter().flat_map(lvalue_targets).collect(),
        _ => Vec::new(),
    }
}

/// Locations visited by a walk over the whole AST, for diagnostics tests.
pub fn all_locs(ast: &Ast) -> Vec<Loc> {
    let mut out = Vec::new();
    for m in &ast.modules {
        out.push(m.loc);
        for p in &m.ports {
            out.push(p.loc);
        }
        for item in &m.items {
            let mut push_expr = |e: &Expr| e.walk(&mut |x| out.push(x.loc));
            match item {
                Item::Net(n) => push_expr(&Expr::ident("", n.loc)),
                Item::Param(p) => push_expr(&p.value),
                Item::Assign(a) => {
                    push_expr(&a.lhs);
                    push_expr(&a.rhs);
                }
                Item::Always(a) => {
                    out.push(a.loc);
                    a.body.exprs(&mut |e| e.walk(&mut |x| out.push(x.loc)));
                }
                Item::Gate(g) => {
                    out.push(g.loc);
                    g.terminals.iter().for_each(|t| t.walk(&mut |x| out.push(x.loc)));
                }
                Item::Inst(i) => out.push(i.loc),
            }
        }
    }
    out
}
