// SPDX-License-Identifier: Apache-2.0

//! Design families, labelled pairs, stratified splits and
//! dataflow-preserving source variants.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frontend::ast::*;
use crate::frontend::emit::emit_ast;
use crate::frontend::{
    flatten_hierarchy, infer_top, parse_files, preprocess_with, FrontendError, IncludeResolver, SourceUnit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Abstraction {
    Rtl,
    Netlist,
}

impl Abstraction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rtl => "rtl",
            Self::Netlist => "netlist",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rtl" => Some(Self::Rtl),
            "netlist" => Some(Self::Netlist),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Design {
    pub path: String,
    pub abstraction: Abstraction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignFamily {
    pub id: String,
    pub members: Vec<Design>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

/// An unordered design pair; `label` is `+1` for the same family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub label: i8,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("need at least two design families, found {0}")]
    TooFewFamilies(usize),
    #[error("family `{0}` has no members")]
    EmptyFamily(String),
    #[error("design `{0}` appears more than once")]
    DuplicateDesign(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

/// Every unordered pair of designs: `+1` within a family, `-1` across.
/// Splits default to train.
pub fn make_pairs(families: &[DesignFamily]) -> Result<Vec<PairRecord>, CorpusError> {
    if families.len() < 2 {
        return Err(CorpusError::TooFewFamilies(families.len()));
    }
    let mut seen = BTreeSet::new();
    let mut all: Vec<(usize, &str)> = Vec::new();
    for (f, fam) in families.iter().enumerate() {
        if fam.members.is_empty() {
            return Err(CorpusError::EmptyFamily(fam.id.clone()));
        }
        for m in &fam.members {
            if !seen.insert(m.path.as_str()) {
                return Err(CorpusError::DuplicateDesign(m.path.clone()));
            }
            all.push((f, &m.path));
        }
    }
    let mut out = Vec::with_capacity(all.len() * all.len().saturating_sub(1) / 2);
    for (i, &(fa, a)) in all.iter().enumerate() {
        for &(fb, b) in &all[i + 1..] {
            out.push(PairRecord {
                a: a.to_owned(),
                b: b.to_owned(),
                label: if fa == fb { 1 } else { -1 },
                split: Split::Train,
            });
        }
    }
    Ok(out)
}

/// Marks `round(test_fraction · count)` pairs of each label as test, chosen
/// by a seeded shuffle.
pub fn split(pairs: &[PairRecord], test_fraction: f64, seed: u64) -> Result<Vec<PairRecord>, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadFraction(test_fraction));
    }
    let mut out: Vec<PairRecord> = pairs.iter().cloned().map(|p| PairRecord { split: Split::Train, ..p }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for label in [1i8, -1] {
        let mut idx: Vec<usize> = (0..out.len()).filter(|&i| out[i].label == label).collect();
        idx.shuffle(&mut rng);
        let k = libm::round(test_fraction * idx.len() as f64) as usize;
        for &i in &idx[..k] {
            out[i].split = Split::Test;
        }
    }
    Ok(out)
}

/// Source transformations that keep the dataflow graph intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    /// Fresh names for modules, ports, nets, parameters and instances.
    Rename,
    /// Shuffles net declarations.
    ReorderDecls,
    /// Shuffles the concurrent items of each module.
    ReorderStmts,
    /// Wraps the top module in a new pass-through top.
    Wrap,
    /// Moves a subexpression of a continuous assign onto a fresh wire.
    SplitAssign,
}

impl Transform {
    pub const ALL: [Transform; 5] =
        [Transform::SplitAssign, Transform::ReorderDecls, Transform::ReorderStmts, Transform::Rename, Transform::Wrap];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rename => "rename",
            Self::ReorderDecls => "reorder-decls",
            Self::ReorderStmts => "reorder-stmts",
            Self::Wrap => "wrap",
            Self::SplitAssign => "split-assign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == s)
    }
}

/// Writes `count` variants of a design. Each variant applies a seeded,
/// nonempty subset of `transforms` (in the order of [`Transform::ALL`]) and
/// contains only the modules reachable from the top.
pub fn synthesize_variants(
    unit: &SourceUnit,
    resolver: &dyn IncludeResolver,
    transforms: &[Transform],
    count: usize,
    seed: u64,
) -> Result<Vec<String>, FrontendError> {
    let files = preprocess_with(unit, resolver)?;
    let ast = parse_files(&files)?;
    let top = if unit.top_module.is_empty() { infer_top(&ast)? } else { unit.top_module.clone() };
    let flat = flatten_hierarchy(&ast, &top)?;
    let ast = reachable_modules(&ast, &top);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<Transform> = Transform::ALL.iter().copied().filter(|t| transforms.contains(t)).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut picks: Vec<Transform> = chosen.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if picks.is_empty() && !chosen.is_empty() {
            picks.push(chosen[rng.random_range(0..chosen.len())]);
        }
        let mut v = ast.clone();
        let mut names = Names::new(&v);
        let mut top_name = top.clone();
        for t in picks {
            match t {
                Transform::SplitAssign => {
                    let n = rng.random_range(1..=3);
                    split_assigns(&mut v, n, &mut rng, &mut names);
                }
                Transform::ReorderDecls => reorder_decls(&mut v, &mut rng),
                Transform::ReorderStmts => reorder_stmts(&mut v, &mut rng),
                Transform::Rename => top_name = rename(&mut v, &top_name, &mut rng, &mut names),
                Transform::Wrap => top_name = wrap(&mut v, &top_name, &flat.module.ports, &mut names, &mut rng),
            }
        }
        out.push(emit_ast(&v));
    }
    Ok(out)
}

fn reachable_modules(ast: &Ast, top: &str) -> Ast {
    let mut keep = BTreeSet::new();
    let mut stack = alloc::vec![top.to_owned()];
    while let Some(m) = stack.pop() {
        if keep.insert(m.clone()) {
            if let Some(d) = ast.module(&m) {
                stack.extend(d.instances().map(|i| i.module.clone()));
            }
        }
    }
    Ast { files: ast.files.clone(), modules: ast.modules.iter().filter(|m| keep.contains(&m.name)).cloned().collect() }
}

/// Fresh-name source that never collides with an existing identifier.
struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn new(ast: &Ast) -> Self {
        let mut used = BTreeSet::new();
        for m in &ast.modules {
            used.insert(m.name.clone());
            used.extend(m.ports.iter().map(|p| p.name.clone()));
            for item in &m.items {
                match item {
                    Item::Net(n) => drop(used.insert(n.name.clone())),
                    Item::Param(p) => drop(used.insert(p.name.clone())),
                    Item::Inst(i) => drop(used.insert(i.name.clone())),
                    Item::Gate(g) => drop(g.name.as_ref().map(|n| used.insert(n.clone()))),
                    _ => {}
                }
            }
        }
        Self { used }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, prefix: &str) -> String {
        loop {
            let tail: String = (0..6).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect();
            let name = format!("{prefix}{tail}");
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn shuffle_slots(items: &mut [Item], pick: impl Fn(&Item) -> bool, rng: &mut ChaCha8Rng) {
    let slots: Vec<usize> = (0..items.len()).filter(|&i| pick(&items[i])).collect();
    let mut order = slots.clone();
    order.shuffle(rng);
    let moved: Vec<Item> = order.iter().map(|&i| items[i].clone()).collect();
    for (slot, item) in slots.into_iter().zip(moved) {
        items[slot] = item;
    }
}

fn reorder_decls(ast: &mut Ast, rng: &mut ChaCha8Rng) {
    for m in &mut ast.modules {
        shuffle_slots(&mut m.items, |i| matches!(i, Item::Net(_)), rng);
    }
}

fn reorder_stmts(ast: &mut Ast, rng: &mut ChaCha8Rng) {
    for m in &mut ast.modules {
        shuffle_slots(
            &mut m.items,
            |i| matches!(i, Item::Assign(_) | Item::Always(_) | Item::Gate(_) | Item::Inst(_)),
            rng,
        );
    }
}

fn rename_expr(e: &mut Expr, map: &BTreeMap<String, String>) {
    e.walk_mut(&mut |x| {
        if let ExprKind::Ident(n) = &mut x.kind {
            if let Some(r) = map.get(n.as_str()) {
                *n = r.clone();
            }
        }
    });
}

/// Renames everything; returns the new top name.
fn rename(ast: &mut Ast, top: &str, rng: &mut ChaCha8Rng, names: &mut Names) -> String {
    let module_map: BTreeMap<String, String> =
        ast.modules.iter().map(|m| (m.name.clone(), names.fresh(rng, "m_"))).collect();
    let mut local: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for m in &ast.modules {
        let mut map = BTreeMap::new();
        for p in &m.ports {
            map.insert(p.name.clone(), names.fresh(rng, "p_"));
        }
        for item in &m.items {
            match item {
                Item::Net(n) => drop(map.insert(n.name.clone(), names.fresh(rng, "n_"))),
                Item::Param(p) => drop(map.insert(p.name.clone(), names.fresh(rng, "k_"))),
                _ => {}
            }
        }
        local.insert(m.name.clone(), map);
    }
    for m in &mut ast.modules {
        let map = &local[&m.name];
        for p in &mut m.ports {
            p.name = map[&p.name].clone();
            if let Some(r) = &mut p.range {
                rename_expr(&mut r.msb, map);
                rename_expr(&mut r.lsb, map);
            }
        }
        for item in &mut m.items {
            match item {
                Item::Net(n) => {
                    n.name = map[&n.name].clone();
                    if let Some(r) = &mut n.range {
                        rename_expr(&mut r.msb, map);
                        rename_expr(&mut r.lsb, map);
                    }
                }
                Item::Param(p) => {
                    p.name = map[&p.name].clone();
                    rename_expr(&mut p.value, map);
                }
                Item::Assign(a) => {
                    rename_expr(&mut a.lhs, map);
                    rename_expr(&mut a.rhs, map);
                }
                Item::Always(a) => {
                    if let Sensitivity::List(l) = &mut a.sensitivity {
                        l.iter_mut().for_each(|(_, e)| rename_expr(e, map));
                    }
                    a.body.exprs_mut(&mut |e| rename_expr(e, map));
                }
                Item::Gate(g) => {
                    g.terminals.iter_mut().for_each(|t| rename_expr(t, map));
                    if g.name.is_some() {
                        g.name = Some(names.fresh(rng, "g_"));
                    }
                }
                Item::Inst(i) => {
                    let child = local.get(&i.module);
                    match &mut i.connections {
                        Connections::Positional(v) => v.iter_mut().flatten().for_each(|e| rename_expr(e, map)),
                        Connections::Named(v) => {
                            for (port, e) in v.iter_mut() {
                                if let Some(c) = child.and_then(|c| c.get(port.as_str())) {
                                    *port = c.clone();
                                }
                                if let Some(e) = e {
                                    rename_expr(e, map);
                                }
                            }
                        }
                    }
                    match &mut i.params {
                        Some(ParamOverrides::Positional(v)) => v.iter_mut().for_each(|e| rename_expr(e, map)),
                        Some(ParamOverrides::Named(v)) => {
                            for (p, e) in v.iter_mut() {
                                if let Some(c) = child.and_then(|c| c.get(p.as_str())) {
                                    *p = c.clone();
                                }
                                rename_expr(e, map);
                            }
                        }
                        None => {}
                    }
                    if let Some(n) = module_map.get(&i.module) {
                        i.module = n.clone();
                    }
                    i.name = names.fresh(rng, "u_");
                }
            }
        }
        m.name = module_map[&m.name].clone();
    }
    module_map.get(top).cloned().unwrap_or_else(|| top.to_owned())
}

/// Adds a new top that instantiates the old one with every port passed
/// through. `ports` carry literal ranges.
fn wrap(ast: &mut Ast, top: &str, ports: &[Port], names: &mut Names, rng: &mut ChaCha8Rng) -> String {
    let Some(old) = ast.module(top) else { return top.to_owned() };
    let loc = old.loc;
    let name = names.fresh(rng, "w_");
    // The literal ranges belong to the original port names, in order.
    let new_ports: Vec<Port> = old
        .ports
        .iter()
        .zip(ports)
        .map(|(p, lit)| Port { name: p.name.clone(), dir: p.dir, kind: NetKind::Wire, range: lit.range.clone(), loc })
        .collect();
    let connections = Connections::Named(
        old.ports.iter().map(|p| (p.name.clone(), Some(Expr::ident(p.name.clone(), loc)))).collect(),
    );
    let inst = ModuleInst { module: top.to_owned(), name: names.fresh(rng, "u_"), params: None, connections, loc };
    ast.modules.push(ModuleDecl {
        name: name.clone(),
        ports: new_ports,
        items: alloc::vec![Item::Inst(inst)],
        ansi: true,
        loc,
    });
    name
}

struct Widths<'a> {
    module: &'a ModuleDecl,
    params: BTreeMap<String, i128>,
}

impl<'a> Widths<'a> {
    fn new(module: &'a ModuleDecl) -> Self {
        let mut w = Self { module, params: BTreeMap::new() };
        for p in module.params() {
            if let Some(v) = w.eval(&p.value) {
                w.params.insert(p.name.clone(), v);
            }
        }
        w
    }

    fn eval(&self, e: &Expr) -> Option<i128> {
        match &e.kind {
            ExprKind::Number { value, .. } => (*value).and_then(|v| i128::try_from(v).ok()),
            ExprKind::Ident(n) => self.params.get(n).copied(),
            ExprKind::Unary(UnaryOp::Minus, a) => self.eval(a).map(|v| -v),
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match op {
                    BinaryOp::Add => a.checked_add(b),
                    BinaryOp::Sub => a.checked_sub(b),
                    BinaryOp::Mul => a.checked_mul(b),
                    BinaryOp::Div => a.checked_div(b),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    fn range_width(&self, r: &Option<Range>) -> Option<u32> {
        match r {
            None => Some(1),
            Some(r) => Some(((self.eval(&r.msb)? - self.eval(&r.lsb)?).unsigned_abs() + 1) as u32),
        }
    }

    fn ident(&self, n: &str) -> Option<u32> {
        if let Some(p) = self.module.port(n) {
            return self.range_width(&p.range);
        }
        self.module.nets().find(|d| d.name == n).and_then(|d| self.range_width(&d.range))
    }

    /// Self-determined width.
    fn of(&self, e: &Expr) -> Option<u32> {
        Some(match &e.kind {
            ExprKind::Ident(n) => self.ident(n)?,
            ExprKind::Number { width, .. } => width.unwrap_or(32),
            ExprKind::Unary(UnaryOp::Plus | UnaryOp::Minus | UnaryOp::Not, a) => self.of(a)?,
            ExprKind::Unary(..) => 1,
            ExprKind::Binary(op, a, b) => match op {
                BinaryOp::Add
                | BinaryOp::Sub
                | BinaryOp::Mul
                | BinaryOp::Div
                | BinaryOp::Mod
                | BinaryOp::And
                | BinaryOp::Or
                | BinaryOp::Xor
                | BinaryOp::Xnor
                | BinaryOp::Nand
                | BinaryOp::Nor => self.of(a)?.max(self.of(b)?),
                BinaryOp::Pow | BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr => self.of(a)?,
                _ => 1,
            },
            ExprKind::Ternary(_, a, b) => self.of(a)?.max(self.of(b)?),
            ExprKind::Concat(v) => v.iter().map(|x| self.of(x)).sum::<Option<u32>>()?,
            ExprKind::Repeat(n, v) => {
                let k = u32::try_from(self.eval(n)?).ok()?;
                k * v.iter().map(|x| self.of(x)).sum::<Option<u32>>()?
            }
            ExprKind::Index(..) => 1,
            ExprKind::Slice { kind: PartSelectKind::Range, left, right, .. } => {
                ((self.eval(left)? - self.eval(right)?).unsigned_abs() + 1) as u32
            }
            ExprKind::Slice { right, .. } => u32::try_from(self.eval(right)?).ok()?,
        })
    }
}

/// Paths (child indices from the root) of subexpressions evaluated in the
/// assignment's context width: the root and anything below it through
/// arithmetic or bitwise operators, `~`, unary minus and ternary arms.
fn context_paths(e: &Expr, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if matches!(e.kind, ExprKind::Ident(_) | ExprKind::Number { .. }) {
        return;
    }
    out.push(path.clone());
    let mut visit = |i: usize, c: &Expr| {
        path.push(i);
        context_paths(c, path, out);
        path.pop();
    };
    match &e.kind {
        ExprKind::Binary(
            BinaryOp::Add
            | BinaryOp::Sub
            | BinaryOp::Mul
            | BinaryOp::Div
            | BinaryOp::Mod
            | BinaryOp::And
            | BinaryOp::Or
            | BinaryOp::Xor
            | BinaryOp::Xnor,
            a,
            b,
        ) => {
            visit(0, a);
            visit(1, b);
        }
        ExprKind::Unary(UnaryOp::Not | UnaryOp::Minus, a) => visit(0, a),
        ExprKind::Ternary(_, a, b) => {
            visit(1, a);
            visit(2, b);
        }
        _ => {}
    }
}

fn at_path<'e>(e: &'e mut Expr, path: &[usize]) -> &'e mut Expr {
    let Some((&i, rest)) = path.split_first() else { return e };
    let child: &mut Expr = match (&mut e.kind, i) {
        (ExprKind::Binary(_, a, _), 0) | (ExprKind::Unary(_, a), 0) => a,
        (ExprKind::Binary(_, _, b), 1) | (ExprKind::Ternary(_, b, _), 1) => b,
        (ExprKind::Ternary(_, _, c), 2) => c,
        _ => unreachable!("path built by context_paths"),
    };
    at_path(child, rest)
}

/// Splits up to `n` continuous assigns: a context-width subexpression moves
/// to a fresh wire of width `max(self-determined width, lhs width)`.
fn split_assigns(ast: &mut Ast, n: usize, rng: &mut ChaCha8Rng, names: &mut Names) {
    let overridden: BTreeSet<String> = ast
        .modules
        .iter()
        .flat_map(|m| m.instances().filter(|i| i.params.is_some()).map(|i| i.module.clone()))
        .collect();
    let mut candidates: Vec<(usize, usize, Vec<usize>, u32)> = Vec::new();
    for (mi, m) in ast.modules.iter().enumerate() {
        if overridden.contains(&m.name) {
            continue;
        }
        let widths = Widths::new(m);
        for (ii, item) in m.items.iter().enumerate() {
            let Item::Assign(a) = item else { continue };
            // A concatenated lvalue duplicates the rhs per target in the graph.
            if matches!(a.lhs.kind, ExprKind::Concat(_)) {
                continue;
            }
            let (Some(wl), Some(wr)) = (widths.of(&a.lhs), widths.of(&a.rhs)) else { continue };
            let mut paths = Vec::new();
            context_paths(&a.rhs, &mut Vec::new(), &mut paths);
            for p in paths {
                candidates.push((mi, ii, p, wl.max(wr)));
            }
        }
    }
    candidates.shuffle(rng);
    let mut touched = BTreeSet::new();
    let mut picked: Vec<(usize, usize, Vec<usize>, u32)> =
        candidates.into_iter().filter(|c| touched.insert((c.0, c.1))).take(n).collect();
    // Insert from the back so earlier item indices stay valid.
    picked.sort_by_key(|p| core::cmp::Reverse((p.0, p.1)));
    let mut decls: BTreeMap<usize, Vec<Item>> = BTreeMap::new();
    for (mi, ii, path, width) in picked {
        let m = &mut ast.modules[mi];
        let wire = names.fresh(rng, "t_");
        let Item::Assign(a) = &mut m.items[ii] else { unreachable!() };
        let loc = a.loc;
        let slot = at_path(&mut a.rhs, &path);
        let sub = core::mem::replace(slot, Expr::ident(wire.clone(), loc));
        let range =
            (width > 1).then(|| Range { msb: Expr::number(u128::from(width - 1), loc), lsb: Expr::number(0, loc) });
        m.items.insert(ii, Item::Assign(ContAssign { lhs: Expr::ident(wire.clone(), loc), rhs: sub, loc }));
        decls.entry(mi).or_default().push(Item::Net(NetDecl { name: wire, kind: NetKind::Wire, range, loc }));
    }
    for (mi, nets) in decls {
        ast.modules[mi].items.splice(0..0, nets);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::{extract, DataFlowGraph};
    use crate::encode::NodeKind;
    use crate::frontend::{elaborate, UnitResolver};

    fn fam(id: &str, n: usize) -> DesignFamily {
        DesignFamily {
            id: id.into(),
            members: (0..n).map(|i| Design { path: format!("{id}/{i}.v"), abstraction: Abstraction::Rtl }).collect(),
        }
    }

    #[test]
    fn pair_counts() {
        let p = make_pairs(&[fam("a", 2), fam("b", 2)]).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.iter().filter(|r| r.label == 1).count(), 2);
        let p = make_pairs(&[fam("a", 3), fam("b", 1)]).unwrap();
        assert_eq!((p.iter().filter(|r| r.label == 1).count(), p.iter().filter(|r| r.label == -1).count()), (3, 3));
        assert_eq!(make_pairs(&[fam("a", 3)]), Err(CorpusError::TooFewFamilies(1)));
    }

    #[test]
    fn labels_are_sound() {
        let fams = [fam("a", 3), fam("b", 4), fam("c", 2)];
        let p = make_pairs(&fams).unwrap();
        assert_eq!(p.len(), 9 * 8 / 2);
        for r in &p {
            let same = r.a.split('/').next() == r.b.split('/').next();
            assert_eq!(r.label == 1, same);
            assert_ne!(r.a, r.b);
        }
    }

    #[test]
    fn stratified_split() {
        let mut pairs = Vec::new();
        for i in 0..20 {
            pairs.push(PairRecord {
                a: format!("x{i}"),
                b: format!("y{i}"),
                label: if i < 10 { 1 } else { -1 },
                split: Split::Train,
            });
        }
        let s = split(&pairs, 0.2, 7).unwrap();
        let test = |l| s.iter().filter(|p| p.label == l && p.split == Split::Test).count();
        assert_eq!((test(1), test(-1)), (2, 2));
        assert_eq!(s, split(&pairs, 0.2, 7).unwrap());
        assert!(split(&pairs, 0.0, 7).is_err());
        assert!(split(&pairs, 1.0, 7).is_err());
    }

    const SRC: &str = "module half(input a, b, output s, c); assign s = a ^ b; assign c = a & b; endmodule\n\
        module adder #(parameter W = 4) (input [W-1:0] x, input [W-1:0] y, input cin, output [W-1:0] sum, output cout);\n\
        wire [W:0] t;\n wire h, k;\n half hh(.a(x[0]), .b(y[0]), .s(h), .c(k));\n\
        assign t = x + y + cin + (h & k);\n assign {cout, sum} = t ^ {1'b0, x};\nendmodule";

    fn graph_of(text: &str) -> DataFlowGraph {
        extract(&elaborate(&SourceUnit::single("v.v", text, "")).unwrap()).unwrap()
    }

    fn histogram(g: &DataFlowGraph) -> BTreeMap<NodeKind, usize> {
        let mut h = BTreeMap::new();
        for n in &g.nodes {
            *h.entry(n.kind).or_insert(0) += 1;
        }
        h
    }

    #[test]
    fn every_transform_keeps_the_graph_shape() {
        let unit = SourceUnit::single("adder.v", SRC, "");
        let base = graph_of(SRC);
        for t in Transform::ALL {
            let vs = synthesize_variants(&unit, &UnitResolver::new(&unit), &[t], 4, 11).unwrap();
            for v in vs {
                let g = graph_of(&v);
                assert_eq!(histogram(&g), histogram(&base), "{t:?}\n{v}");
                assert_eq!(g.edges.len(), base.edges.len(), "{t:?}\n{v}");
            }
        }
    }

    #[test]
    fn variants_are_seeded() {
        let unit = SourceUnit::single("adder.v", SRC, "");
        let r = UnitResolver::new(&unit);
        let a = synthesize_variants(&unit, &r, &Transform::ALL, 5, 3).unwrap();
        assert_eq!(a, synthesize_variants(&unit, &r, &Transform::ALL, 5, 3).unwrap());
        assert_ne!(a, synthesize_variants(&unit, &r, &Transform::ALL, 5, 4).unwrap());
    }

    #[test]
    fn split_widens_to_the_context() {
        let src = "module m(input [3:0] a, b, output [4:0] y); assign y = (a + b) ^ 5'd1; endmodule";
        let mut ast = crate::frontend::parse(src, "m.v").unwrap();
        let mut names = Names::new(&ast);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        split_assigns(&mut ast, 1, &mut rng, &mut names);
        let m = &ast.modules[0];
        let net = m.nets().next().unwrap();
        let r = net.range.as_ref().unwrap();
        assert_eq!(r.msb.kind, Expr::number(4, r.msb.loc).kind);
        assert_eq!(m.assigns().count(), 2);
    }

    #[test]
    fn wrapper_keeps_ports() {
        let unit = SourceUnit::single("adder.v", SRC, "");
        let v = synthesize_variants(&unit, &UnitResolver::new(&unit), &[Transform::Wrap], 1, 0).unwrap();
        let f = elaborate(&SourceUnit::single("v.v", &v[0], "")).unwrap();
        let orig = elaborate(&unit).unwrap();
        let sig = |m: &crate::frontend::FlatModule| {
            m.module.ports.iter().map(|p| (p.name.clone(), p.dir, m.width_of(&p.name))).collect::<Vec<_>>()
        };
        assert_eq!(sig(&f), sig(&orig));
        assert_ne!(f.name(), orig.name());
    }
}
