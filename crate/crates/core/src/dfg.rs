// SPDX-License-Identifier: Apache-2.0

//! Dataflow graphs.
//!
//! Every signal gets a driver tree ([`analyze_signal`]); the trees are merged
//! on signal names into one graph ([`build_dfg`]) whose edges run from a
//! consumer to its operands, i.e. from the outputs (roots) towards inputs and
//! constants (leaves). [`trim`] then drops unreachable nodes and contracts
//! internal-signal aliases.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encode::NodeKind;
use crate::frontend::ast::*;
use crate::frontend::FlatModule;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfgNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Signal name or literal text. Never used as a feature.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataFlowGraph {
    pub name: String,
    /// `nodes[i].id == i`.
    pub nodes: Vec<DfgNode>,
    /// `(consumer, operand)`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    /// Output-port nodes, sorted.
    pub roots: Vec<usize>,
    /// Nodes without operands, sorted.
    pub leaves: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DfgError {
    #[error("`{signal}` has more than one continuous driver")]
    MultipleContinuousDrivers { signal: String },
    #[error("`{signal}` is read but never driven")]
    UndrivenSignal { signal: String },
    #[error("`{signal}` is not declared")]
    UnknownSignal { signal: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a missing node")]
    DanglingEdge(usize, usize),
    #[error("node at position {0} has id {1}")]
    BadId(usize, usize),
    #[error("root {0} is not a node")]
    BadRoot(usize),
}

impl DataFlowGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operand lists, each sorted.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        out
    }

    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            out[b].push(a);
        }
        out
    }

    /// Nodes reachable from `from` along edge direction, `from` included.
    pub fn reachable(&self, from: &[usize]) -> Vec<bool> {
        let children = self.children();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = from.iter().copied().collect();
        for &r in from {
            seen[r] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        seen
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.reachable(&[from])[to]
    }

    /// First node with this kind and label.
    pub fn find(&self, kind: NodeKind, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == kind && n.label.as_deref() == Some(label))
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(GraphError::BadId(i, n.id));
            }
        }
        let n = self.nodes.len();
        if let Some(&(a, b)) = self.edges.iter().find(|(a, b)| *a >= n || *b >= n) {
            return Err(GraphError::DanglingEdge(a, b));
        }
        if let Some(&r) = self.roots.iter().find(|r| **r >= n) {
            return Err(GraphError::BadRoot(r));
        }
        Ok(())
    }

    /// Assembles a graph, sorting and deduplicating edges and deriving leaves.
    pub fn from_parts(
        name: impl Into<String>,
        nodes: Vec<(NodeKind, Option<String>)>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        roots: impl IntoIterator<Item = usize>,
    ) -> Self {
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        let roots: BTreeSet<usize> = roots.into_iter().collect();
        let nodes: Vec<DfgNode> =
            nodes.into_iter().enumerate().map(|(id, (kind, label))| DfgNode { id, kind, label }).collect();
        let mut has_child = vec![false; nodes.len()];
        for &(a, _) in &edges {
            if a < has_child.len() {
                has_child[a] = true;
            }
        }
        let leaves = (0..nodes.len()).filter(|&i| !has_child[i]).collect();
        Self {
            name: name.into(),
            nodes,
            edges: edges.into_iter().collect(),
            roots: roots.into_iter().collect(),
            leaves,
        }
    }
}

/// A node of a per-signal driver tree. Signal-kind nodes below the root are
/// terminals naming another signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub label: Option<String>,
    pub loc: Loc,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    fn op(kind: NodeKind, loc: Loc, children: Vec<TreeNode>) -> Self {
        Self { kind, label: None, loc, children }
    }

    fn leaf(kind: NodeKind, label: &str, loc: Loc) -> Self {
        Self { kind, label: Some(label.to_owned()), loc, children: Vec::new() }
    }

    pub fn is_terminal(&self) -> bool {
        self.kind.is_signal()
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }
}

/// The driver tree of one signal: `root` is the signal itself and has the
/// driver expression as its only child (inputs have none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalTree {
    pub signal: String,
    pub root: TreeNode,
}

fn signal_kind(flat: &FlatModule, name: &str) -> Option<NodeKind> {
    if let Some(p) = flat.module.port(name) {
        return Some(match p.dir {
            Direction::Input => NodeKind::Input,
            Direction::Output => NodeKind::Output,
            Direction::Inout => NodeKind::Inout,
        });
    }
    flat.is_declared(name).then_some(NodeKind::Signal)
}

fn unary_kind(op: UnaryOp) -> (Option<NodeKind>, NodeKind) {
    match op {
        UnaryOp::Plus => (None, NodeKind::Unknown),
        UnaryOp::Minus => (None, NodeKind::Minus),
        UnaryOp::Not => (None, NodeKind::Not),
        UnaryOp::LNot => (None, NodeKind::LNot),
        UnaryOp::RedAnd => (None, NodeKind::RedAnd),
        UnaryOp::RedOr => (None, NodeKind::RedOr),
        UnaryOp::RedXor => (None, NodeKind::RedXor),
        UnaryOp::RedNand => (Some(NodeKind::Not), NodeKind::RedAnd),
        UnaryOp::RedNor => (Some(NodeKind::Not), NodeKind::RedOr),
        UnaryOp::RedXnor => (Some(NodeKind::Not), NodeKind::RedXor),
    }
}

fn binary_kind(op: BinaryOp) -> NodeKind {
    match op {
        BinaryOp::Add => NodeKind::Plus,
        BinaryOp::Sub => NodeKind::Minus,
        BinaryOp::Mul => NodeKind::Times,
        BinaryOp::Div => NodeKind::Divide,
        BinaryOp::Mod => NodeKind::Mod,
        BinaryOp::Pow => NodeKind::Unknown,
        BinaryOp::Shl | BinaryOp::AShl => NodeKind::ShiftL,
        BinaryOp::Shr | BinaryOp::AShr => NodeKind::ShiftR,
        BinaryOp::Lt => NodeKind::Lt,
        BinaryOp::Le => NodeKind::Le,
        BinaryOp::Gt => NodeKind::Gt,
        BinaryOp::Ge => NodeKind::Ge,
        BinaryOp::Eq | BinaryOp::CaseEq => NodeKind::Eq,
        BinaryOp::Ne | BinaryOp::CaseNe => NodeKind::Neq,
        BinaryOp::And => NodeKind::And,
        BinaryOp::Or => NodeKind::Or,
        BinaryOp::Xor => NodeKind::Xor,
        BinaryOp::Xnor => NodeKind::Xnor,
        BinaryOp::Nand => NodeKind::Nand,
        BinaryOp::Nor => NodeKind::Nor,
        BinaryOp::LAnd => NodeKind::LAnd,
        BinaryOp::LOr => NodeKind::LOr,
    }
}

struct Analyzer<'a> {
    flat: &'a FlatModule,
    target: &'a str,
}

impl Analyzer<'_> {
    fn tree(&self, e: &Expr) -> TreeNode {
        let loc = e.loc;
        match &e.kind {
            ExprKind::Ident(n) => TreeNode::leaf(signal_kind(self.flat, n).unwrap_or(NodeKind::Signal), n, loc),
            ExprKind::Number { text, .. } => TreeNode::leaf(NodeKind::Constant, text, loc),
            ExprKind::Unary(UnaryOp::Plus, a) => self.tree(a),
            ExprKind::Unary(op, a) => {
                let (outer, inner) = unary_kind(*op);
                let t = TreeNode::op(inner, loc, vec![self.tree(a)]);
                match outer {
                    Some(k) => TreeNode::op(k, loc, vec![t]),
                    None => t,
                }
            }
            ExprKind::Binary(op, a, b) => TreeNode::op(binary_kind(*op), loc, vec![self.tree(a), self.tree(b)]),
            ExprKind::Ternary(c, a, b) => {
                TreeNode::op(NodeKind::Cond, loc, vec![self.tree(c), self.tree(a), self.tree(b)])
            }
            ExprKind::Concat(v) => TreeNode::op(NodeKind::Concat, loc, v.iter().map(|x| self.tree(x)).collect()),
            ExprKind::Repeat(n, v) => TreeNode::op(
                NodeKind::Concat,
                loc,
                core::iter::once(self.tree(n)).chain(v.iter().map(|x| self.tree(x))).collect(),
            ),
            ExprKind::Index(b, i) => TreeNode::op(NodeKind::PartSelect, loc, vec![self.tree(b), self.tree(i)]),
            ExprKind::Slice { base, left, right, .. } => {
                TreeNode::op(NodeKind::PartSelect, loc, vec![self.tree(base), self.tree(left), self.tree(right)])
            }
        }
    }

    fn constant(&self, v: i64, loc: Loc) -> TreeNode {
        TreeNode::leaf(NodeKind::Constant, &alloc::format!("{v}"), loc)
    }

    fn width(&self, e: &Expr) -> i64 {
        match &e.kind {
            ExprKind::Ident(n) => self.flat.width_of(n).unwrap_or(1) as i64,
            ExprKind::Index(..) => 1,
            ExprKind::Slice { kind: PartSelectKind::Range, left, right, .. } => match (lit(left), lit(right)) {
                (Some(l), Some(r)) => (l - r).abs() + 1,
                _ => 1,
            },
            ExprKind::Slice { right, .. } => lit(right).unwrap_or(1),
            ExprKind::Concat(v) => v.iter().map(|x| self.width(x)).sum(),
            _ => 1,
        }
    }

    /// What an assignment `lhs = rhs` contributes to the target: `None` when
    /// it does not write the target, `Some((true, t))` for a whole-signal
    /// write and `Some((false, t))` for a partial one.
    fn contribution(&self, lhs: &Expr, rhs: &Expr) -> Option<(bool, TreeNode)> {
        match &lhs.kind {
            ExprKind::Ident(n) if n == self.target => Some((true, self.tree(rhs))),
            ExprKind::Index(b, i) if b.as_ident() == Some(self.target) => {
                Some((false, TreeNode::op(NodeKind::PartSelect, lhs.loc, vec![self.tree(rhs), self.tree(i)])))
            }
            ExprKind::Slice { base, left, right, .. } if base.as_ident() == Some(self.target) => Some((
                false,
                TreeNode::op(NodeKind::PartSelect, lhs.loc, vec![self.tree(rhs), self.tree(left), self.tree(right)]),
            )),
            ExprKind::Concat(parts) => {
                // parts are listed msb first
                let mut lsb = 0i64;
                for p in parts.iter().rev() {
                    let w = self.width(p);
                    if lvalue_targets(p).contains(&self.target) {
                        let sel = TreeNode::op(
                            NodeKind::PartSelect,
                            p.loc,
                            vec![self.tree(rhs), self.constant(lsb + w - 1, p.loc), self.constant(lsb, p.loc)],
                        );
                        return Some((false, sel));
                    }
                    lsb += w;
                }
                None
            }
            _ => None,
        }
    }

    fn hold(&self, loc: Loc) -> TreeNode {
        TreeNode::leaf(signal_kind(self.flat, self.target).unwrap_or(NodeKind::Signal), self.target, loc)
    }

    fn writes(&self, s: &Stmt) -> bool {
        let mut hit = false;
        s.walk(&mut |x| {
            if let Stmt::Assign { lhs, .. } = x {
                hit |= lvalue_targets(lhs).contains(&self.target);
            }
        });
        hit
    }

    /// Symbolic execution: the target's value after `s`, given its value
    /// before. `None` means not assigned on any path so far.
    fn exec(&self, s: &Stmt, cur: Option<TreeNode>) -> Option<TreeNode> {
        if !self.writes(s) {
            return cur;
        }
        match s {
            Stmt::Null => cur,
            Stmt::Block(v) => v.iter().fold(cur, |c, s| self.exec(s, c)),
            Stmt::Assign { lhs, rhs, .. } => match self.contribution(lhs, rhs) {
                None => cur,
                Some((true, t)) => Some(t),
                Some((false, t)) => Some(match cur {
                    None => t,
                    Some(c) => TreeNode::op(NodeKind::Concat, t.loc, vec![c, t]),
                }),
            },
            Stmt::If { cond, then_branch, else_branch, loc } => {
                let t = self.exec(then_branch, cur.clone());
                let e = match else_branch {
                    Some(e) => self.exec(e, cur.clone()),
                    None => cur.clone(),
                };
                Some(self.branch(self.tree(cond), t, e, *loc))
            }
            Stmt::Case { subject, arms, default, loc, .. } => {
                let mut acc = match default {
                    Some(d) => self.exec(d, cur.clone()),
                    None => cur.clone(),
                };
                for arm in arms.iter().rev() {
                    let conds: Vec<TreeNode> = arm
                        .labels
                        .iter()
                        .map(|l| TreeNode::op(NodeKind::Eq, l.loc, vec![self.tree(subject), self.tree(l)]))
                        .collect();
                    let cond = conds
                        .into_iter()
                        .reduce(|a, b| TreeNode::op(NodeKind::LOr, *loc, vec![a, b]))
                        .unwrap_or_else(|| self.constant(0, *loc));
                    let val = self.exec(&arm.body, cur.clone());
                    acc = Some(self.branch(cond, val, acc, *loc));
                }
                acc
            }
        }
    }

    fn branch(&self, cond: TreeNode, t: Option<TreeNode>, e: Option<TreeNode>, loc: Loc) -> TreeNode {
        let t = t.unwrap_or_else(|| self.hold(loc));
        let e = e.unwrap_or_else(|| self.hold(loc));
        TreeNode::op(NodeKind::Branch, loc, vec![cond, t, e])
    }
}

fn lit(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprKind::Number { value: Some(v), .. } => i64::try_from(*v).ok(),
        _ => None,
    }
}

/// Builds the driver tree of one signal from every continuous assign and
/// always block that writes it. Several drivers are joined by a `Concat` in
/// source order.
pub fn analyze_signal(flat: &FlatModule, signal: &str) -> Result<SignalTree, DfgError> {
    let kind = signal_kind(flat, signal).ok_or_else(|| DfgError::UnknownSignal { signal: signal.to_owned() })?;
    let loc = flat.module.port(signal).map(|p| p.loc).unwrap_or_default();
    let mut root = TreeNode::leaf(kind, signal, loc);
    if kind == NodeKind::Input {
        return Ok(SignalTree { signal: signal.to_owned(), root });
    }
    let a = Analyzer { flat, target: signal };
    let mut drivers: Vec<TreeNode> = Vec::new();
    let mut full_continuous = 0usize;
    for item in &flat.module.items {
        match item {
            Item::Assign(c) => {
                if let Some((full, t)) = a.contribution(&c.lhs, &c.rhs) {
                    full_continuous += usize::from(full);
                    drivers.push(t);
                }
            }
            Item::Always(b) => {
                if let Some(t) = a.exec(&b.body, None) {
                    drivers.push(t);
                }
            }
            _ => {}
        }
    }
    if full_continuous > 1 {
        return Err(DfgError::MultipleContinuousDrivers { signal: signal.to_owned() });
    }
    let driver = match drivers.len() {
        0 if kind == NodeKind::Inout => return Ok(SignalTree { signal: signal.to_owned(), root }),
        0 => return Err(DfgError::UndrivenSignal { signal: signal.to_owned() }),
        1 => drivers.pop().expect("one driver"),
        _ => {
            let loc = drivers[0].loc;
            TreeNode::op(NodeKind::Concat, loc, drivers)
        }
    };
    root.children.push(driver);
    Ok(SignalTree { signal: signal.to_owned(), root })
}

struct Proto {
    kind: NodeKind,
    label: Option<String>,
    loc: Loc,
}

struct Builder<'a> {
    flat: &'a FlatModule,
    nodes: Vec<Proto>,
    edges: BTreeSet<(usize, usize)>,
    signals: BTreeMap<String, usize>,
    queue: VecDeque<String>,
}

impl Builder<'_> {
    fn signal(&mut self, name: &str, kind: NodeKind, loc: Loc) -> usize {
        if let Some(&id) = self.signals.get(name) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(Proto { kind, label: Some(name.to_owned()), loc });
        self.signals.insert(name.to_owned(), id);
        self.queue.push_back(name.to_owned());
        id
    }

    fn add(&mut self, t: &TreeNode) -> usize {
        if t.is_terminal() {
            let name = t.label.as_deref().unwrap_or_default();
            let kind = signal_kind(self.flat, name).unwrap_or(t.kind);
            return self.signal(name, kind, t.loc);
        }
        let id = self.nodes.len();
        self.nodes.push(Proto { kind: t.kind, label: t.label.clone(), loc: t.loc });
        for c in &t.children {
            let cid = self.add(c);
            self.edges.insert((id, cid));
        }
        id
    }
}

/// Merges the driver trees of every signal reachable from an output into one
/// graph. Node ids follow the canonical order (kind, label, location,
/// construction order).
pub fn build_dfg(flat: &FlatModule) -> Result<DataFlowGraph, DfgError> {
    let mut b =
        Builder { flat, nodes: Vec::new(), edges: BTreeSet::new(), signals: BTreeMap::new(), queue: VecDeque::new() };
    let mut roots = Vec::new();
    for p in &flat.module.ports {
        if p.dir == Direction::Output {
            roots.push(b.signal(&p.name, NodeKind::Output, p.loc));
        }
    }
    while let Some(name) = b.queue.pop_front() {
        let tree = analyze_signal(flat, &name)?;
        let id = b.signals[&name];
        for c in &tree.root.children {
            let cid = b.add(c);
            b.edges.insert((id, cid));
        }
    }
    let mut order: Vec<usize> = (0..b.nodes.len()).collect();
    order.sort_by(|&x, &y| {
        let (p, q) = (&b.nodes[x], &b.nodes[y]);
        (p.kind, &p.label, p.loc, x).cmp(&(q.kind, &q.label, q.loc, y))
    });
    let mut new_id = vec![0; order.len()];
    for (i, &old) in order.iter().enumerate() {
        new_id[old] = i;
    }
    let mut protos: Vec<Option<Proto>> = b.nodes.into_iter().map(Some).collect();
    let nodes = order
        .iter()
        .map(|&old| {
            let p = protos[old].take().expect("each node once");
            (p.kind, p.label)
        })
        .collect();
    Ok(DataFlowGraph::from_parts(
        flat.name(),
        nodes,
        b.edges.iter().map(|&(a, c)| (new_id[a], new_id[c])),
        roots.iter().map(|&r| new_id[r]),
    ))
}

/// Removes nodes unreachable from a root and contracts internal signals with
/// a single operand into their parents. Relative node order is kept.
pub fn trim(g: &DataFlowGraph) -> DataFlowGraph {
    let n = g.nodes.len();
    let live = g.reachable(&g.roots);
    let mut children: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in &g.edges {
        if live[a] && live[b] {
            children[a].insert(b);
            parents[b].insert(a);
        }
    }
    let mut alive = live;
    let roots: BTreeSet<usize> = g.roots.iter().copied().collect();
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..n {
            if !alive[v] || roots.contains(&v) || g.nodes[v].kind != NodeKind::Signal || children[v].len() != 1 {
                continue;
            }
            let c = *children[v].iter().next().expect("one child");
            if c == v {
                continue;
            }
            for p in core::mem::take(&mut parents[v]) {
                children[p].remove(&v);
                if p != c {
                    children[p].insert(c);
                    parents[c].insert(p);
                }
            }
            parents[c].remove(&v);
            children[v].clear();
            alive[v] = false;
            changed = true;
        }
    }
    let mut new_id = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for v in 0..n {
        if alive[v] {
            new_id[v] = nodes.len();
            nodes.push((g.nodes[v].kind, g.nodes[v].label.clone()));
        }
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .filter(|&v| alive[v])
        .flat_map(|v| children[v].iter().map(move |&c| (v, c)).collect::<Vec<_>>())
        .map(|(a, b)| (new_id[a], new_id[b]))
        .collect();
    DataFlowGraph::from_parts(g.name.clone(), nodes, edges, g.roots.iter().map(|&r| new_id[r]))
}

/// `trim(build_dfg(flat))`.
pub fn extract(flat: &FlatModule) -> Result<DataFlowGraph, DfgError> {
    build_dfg(flat).map(|g| trim(&g))
}
