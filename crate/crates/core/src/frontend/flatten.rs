// SPDX-License-Identifier: Apache-2.0

//! Hierarchy flattening by inlining.
//!
//! Internal signals of an instance at path `u1.u2` are renamed
//! `u1.u2.<name>`. A port connected to a plain identifier is substituted by
//! that identifier; any other connection goes through a wire named after the
//! port (`u1.a`) plus a continuous assign. Parameters are folded to literals
//! and every range is evaluated to integers.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ast::*;
use super::parser::span_of;
use super::FrontendError;

/// A single module with every instance inlined and every gate lowered.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModule {
    /// Holds only `Net`, `Assign` and `Always` items. Ranges are literals.
    pub module: ModuleDecl,
    /// `(msb, lsb)` of every port and net, by (mangled) name.
    pub widths: BTreeMap<String, (i64, i64)>,
    /// File table for locations.
    pub files: Vec<String>,
}

impl FlatModule {
    pub fn name(&self) -> &str {
        &self.module.name
    }

    pub fn width_of(&self, name: &str) -> Option<u32> {
        self.widths.get(name).map(|&(m, l)| (m - l).unsigned_abs() as u32 + 1)
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.widths.contains_key(name)
    }
}

/// The one module no other module instantiates.
pub fn infer_top(ast: &Ast) -> Result<String, FrontendError> {
    let used: BTreeSet<&str> = ast.modules.iter().flat_map(|m| m.instances().map(|i| i.module.as_str())).collect();
    let tops: Vec<&ModuleDecl> = ast.modules.iter().filter(|m| !used.contains(m.name.as_str())).collect();
    match tops.as_slice() {
        [one] => Ok(one.name.clone()),
        _ => Err(FrontendError::AmbiguousTop { candidates: tops.iter().map(|m| m.name.clone()).collect() }),
    }
}

pub fn flatten_hierarchy(ast: &Ast, top: &str) -> Result<FlatModule, FrontendError> {
    let module = ast.module(top).ok_or_else(|| FrontendError::UnknownModule { name: top.to_owned() })?;
    let mut f = Flattener { ast, items: Vec::new(), widths: BTreeMap::new(), stack: Vec::new() };

    let params = f.eval_params(module, None, &BTreeMap::new())?;
    let mut subst: BTreeMap<String, Expr> = BTreeMap::new();
    let mut ports = Vec::with_capacity(module.ports.len());
    for p in &module.ports {
        let (msb, lsb) = f.eval_range(&p.range, &params)?;
        f.widths.insert(p.name.clone(), (msb, lsb));
        subst.insert(p.name.clone(), Expr::ident(p.name.clone(), p.loc));
        ports.push(Port { range: literal_range(&p.range, msb, lsb, p.loc), ..p.clone() });
    }
    f.stack.push(top.to_owned());
    f.inline_body(module, "", &params, subst)?;
    let flat = ModuleDecl { name: module.name.clone(), ports, items: f.items, ansi: true, loc: module.loc };
    Ok(FlatModule { module: flat, widths: f.widths, files: ast.files.clone() })
}

fn literal_range(r: &Option<Range>, msb: i64, lsb: i64, loc: Loc) -> Option<Range> {
    r.as_ref().map(|_| Range { msb: int_literal(msb as i128, loc), lsb: int_literal(lsb as i128, loc) })
}

fn int_literal(v: i128, loc: Loc) -> Expr {
    let value = u128::try_from(v).ok();
    Expr::new(ExprKind::Number { text: format!("{v}"), value, width: None }, loc)
}

struct Flattener<'a> {
    ast: &'a Ast,
    items: Vec<Item>,
    widths: BTreeMap<String, (i64, i64)>,
    stack: Vec<String>,
}

type Env = BTreeMap<String, i128>;

impl Flattener<'_> {
    fn not_const(&self, loc: Loc, reason: String) -> FrontendError {
        FrontendError::NotConstant { span: span_of(&self.ast.files, loc), reason }
    }

    /// Parameter values of `module`, with overrides evaluated in `parent_env`.
    fn eval_params(
        &self,
        module: &ModuleDecl,
        overrides: Option<&ParamOverrides>,
        parent_env: &Env,
    ) -> Result<Env, FrontendError> {
        let overridable: Vec<&ParamDecl> = module.params().filter(|p| !p.local).collect();
        let mut given: BTreeMap<&str, &Expr> = BTreeMap::new();
        match overrides {
            None => {}
            Some(ParamOverrides::Positional(v)) => {
                if v.len() > overridable.len() {
                    return Err(FrontendError::PortArityMismatch {
                        instance: format!("{} (parameters)", module.name),
                        expected: overridable.len(),
                        got: v.len(),
                    });
                }
                for (p, e) in overridable.iter().zip(v) {
                    given.insert(p.name.as_str(), e);
                }
            }
            Some(ParamOverrides::Named(v)) => {
                for (n, e) in v {
                    if !overridable.iter().any(|p| &p.name == n) {
                        return Err(FrontendError::UnknownPort { instance: module.name.clone(), port: n.clone() });
                    }
                    given.insert(n.as_str(), e);
                }
            }
        }
        let mut env = Env::new();
        for p in module.params() {
            let v = match given.get(p.name.as_str()) {
                Some(e) => self.eval(e, parent_env)?,
                None => self.eval(&p.value, &env)?,
            };
            env.insert(p.name.clone(), v);
        }
        Ok(env)
    }

    fn eval_range(&self, r: &Option<Range>, env: &Env) -> Result<(i64, i64), FrontendError> {
        match r {
            None => Ok((0, 0)),
            Some(r) => {
                let msb = self.eval(&r.msb, env)?;
                let lsb = self.eval(&r.lsb, env)?;
                let cvt = |v: i128, loc| {
                    i64::try_from(v)
                        .ok()
                        .filter(|v| *v >= 0)
                        .ok_or_else(|| self.not_const(loc, format!("range bound {v} out of range")))
                };
                Ok((cvt(msb, r.msb.loc)?, cvt(lsb, r.lsb.loc)?))
            }
        }
    }

    fn eval(&self, e: &Expr, env: &Env) -> Result<i128, FrontendError> {
        let bin = |a: &Expr, b: &Expr| -> Result<(i128, i128), FrontendError> {
            Ok((self.eval(a, env)?, self.eval(b, env)?))
        };
        Ok(match &e.kind {
            ExprKind::Number { value: Some(v), .. } => {
                i128::try_from(*v).map_err(|_| self.not_const(e.loc, "literal too large".into()))?
            }
            ExprKind::Number { text, .. } => return Err(self.not_const(e.loc, format!("literal {text}"))),
            ExprKind::Ident(n) => {
                *env.get(n).ok_or_else(|| self.not_const(e.loc, format!("`{n}` is not a parameter")))?
            }
            ExprKind::Unary(op, a) => {
                let a = self.eval(a, env)?;
                match op {
                    UnaryOp::Plus => a,
                    UnaryOp::Minus => -a,
                    UnaryOp::LNot => (a == 0) as i128,
                    UnaryOp::Not => !a,
                    UnaryOp::RedOr => (a != 0) as i128,
                    _ => return Err(self.not_const(e.loc, "reduction operator".into())),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let (a, b) = bin(a, b)?;
                let div = |f: fn(i128, i128) -> Option<i128>| {
                    f(a, b).ok_or_else(|| self.not_const(e.loc, "division by zero".into()))
                };
                match op {
                    BinaryOp::Add => a.wrapping_add(b),
                    BinaryOp::Sub => a.wrapping_sub(b),
                    BinaryOp::Mul => a.wrapping_mul(b),
                    BinaryOp::Div => div(i128::checked_div)?,
                    BinaryOp::Mod => div(i128::checked_rem)?,
                    BinaryOp::Pow => {
                        let exp = u32::try_from(b).map_err(|_| self.not_const(e.loc, "negative exponent".into()))?;
                        a.checked_pow(exp).ok_or_else(|| self.not_const(e.loc, "overflow".into()))?
                    }
                    BinaryOp::Shl | BinaryOp::AShl => a.checked_shl(b as u32).unwrap_or(0),
                    BinaryOp::Shr | BinaryOp::AShr => a.checked_shr(b as u32).unwrap_or(0),
                    BinaryOp::Lt => (a < b) as i128,
                    BinaryOp::Le => (a <= b) as i128,
                    BinaryOp::Gt => (a > b) as i128,
                    BinaryOp::Ge => (a >= b) as i128,
                    BinaryOp::Eq | BinaryOp::CaseEq => (a == b) as i128,
                    BinaryOp::Ne | BinaryOp::CaseNe => (a != b) as i128,
                    BinaryOp::And => a & b,
                    BinaryOp::Or => a | b,
                    BinaryOp::Xor => a ^ b,
                    BinaryOp::Xnor => !(a ^ b),
                    BinaryOp::LAnd => (a != 0 && b != 0) as i128,
                    BinaryOp::LOr => (a != 0 || b != 0) as i128,
                    BinaryOp::Nand => !(a & b),
                    BinaryOp::Nor => !(a | b),
                }
            }
            ExprKind::Ternary(c, a, b) => {
                if self.eval(c, env)? != 0 {
                    self.eval(a, env)?
                } else {
                    self.eval(b, env)?
                }
            }
            _ => return Err(self.not_const(e.loc, "unsupported constant expression".into())),
        })
    }

    /// Inlines the body of `module` whose identifiers map through `subst`
    /// (ports already filled in); internal names get `prefix`.
    fn inline_body(
        &mut self,
        module: &ModuleDecl,
        prefix: &str,
        params: &Env,
        mut subst: BTreeMap<String, Expr>,
    ) -> Result<(), FrontendError> {
        for (n, v) in params {
            subst.insert(n.clone(), int_literal(*v, module.loc));
        }
        for net in module.nets() {
            let name = format!("{prefix}{}", net.name);
            let (msb, lsb) = self.eval_range(&net.range, params)?;
            self.widths.insert(name.clone(), (msb, lsb));
            subst.insert(net.name.clone(), Expr::ident(name.clone(), net.loc));
            self.items.push(Item::Net(NetDecl {
                name,
                kind: net.kind,
                range: literal_range(&net.range, msb, lsb, net.loc),
                loc: net.loc,
            }));
        }
        let rewrite = |e: &Expr| substitute(e, &subst);
        for item in &module.items {
            match item {
                Item::Net(_) | Item::Param(_) => {}
                Item::Assign(a) => {
                    self.items.push(Item::Assign(ContAssign { lhs: rewrite(&a.lhs), rhs: rewrite(&a.rhs), loc: a.loc }))
                }
                Item::Always(a) => {
                    let mut body = a.body.clone();
                    body.exprs_mut(&mut |e| *e = substitute(e, &subst));
                    let sensitivity = match &a.sensitivity {
                        Sensitivity::Star => Sensitivity::Star,
                        Sensitivity::List(l) => Sensitivity::List(l.iter().map(|(k, e)| (*k, rewrite(e))).collect()),
                    };
                    self.items.push(Item::Always(AlwaysBlock { sensitivity, body, loc: a.loc }));
                }
                Item::Gate(g) => {
                    let terms: Vec<Expr> = g.terminals.iter().map(rewrite).collect();
                    for a in lower_gate(g.gate, terms, g.loc) {
                        self.items.push(Item::Assign(a));
                    }
                }
                Item::Inst(inst) => self.inline_instance(inst, prefix, params, &subst)?,
            }
        }
        Ok(())
    }

    fn inline_instance(
        &mut self,
        inst: &ModuleInst,
        prefix: &str,
        parent_env: &Env,
        parent_subst: &BTreeMap<String, Expr>,
    ) -> Result<(), FrontendError> {
        let child =
            self.ast.module(&inst.module).ok_or_else(|| FrontendError::UnknownModule { name: inst.module.clone() })?;
        if let Some(pos) = self.stack.iter().position(|m| m == &inst.module) {
            let mut cycle: Vec<String> = self.stack[pos..].to_vec();
            cycle.push(inst.module.clone());
            return Err(FrontendError::RecursiveInstantiation { cycle });
        }
        let path = format!("{prefix}{}", inst.name);
        let child_prefix = format!("{path}.");
        let params = self.eval_params(child, inst.params.as_ref(), parent_env)?;

        // Resolve connections to (port, parent-side expression).
        let mut conns: Vec<(&Port, Option<Expr>)> = Vec::with_capacity(child.ports.len());
        match &inst.connections {
            Connections::Positional(v) => {
                // `sub u();` parses as one empty positional connection.
                let empty = v.len() == 1 && v[0].is_none() && child.ports.len() != 1;
                if !empty && v.len() != child.ports.len() {
                    return Err(FrontendError::PortArityMismatch {
                        instance: path,
                        expected: child.ports.len(),
                        got: v.len(),
                    });
                }
                for (i, p) in child.ports.iter().enumerate() {
                    let e = if empty { None } else { v[i].as_ref().map(|e| substitute(e, parent_subst)) };
                    conns.push((p, e));
                }
            }
            Connections::Named(v) => {
                for (n, _) in v {
                    if child.port(n).is_none() {
                        return Err(FrontendError::UnknownPort { instance: path, port: n.clone() });
                    }
                }
                for p in &child.ports {
                    let e = v
                        .iter()
                        .find(|(n, _)| n == &p.name)
                        .and_then(|(_, e)| e.as_ref())
                        .map(|e| substitute(e, parent_subst));
                    conns.push((p, e));
                }
            }
        }

        let mut subst: BTreeMap<String, Expr> = BTreeMap::new();
        for (port, conn) in conns {
            match conn {
                Some(e) if e.as_ident().is_some() => {
                    subst.insert(port.name.clone(), e);
                }
                conn => {
                    let wire = format!("{child_prefix}{}", port.name);
                    let (msb, lsb) = self.eval_range(&port.range, &params)?;
                    self.widths.insert(wire.clone(), (msb, lsb));
                    self.items.push(Item::Net(NetDecl {
                        name: wire.clone(),
                        kind: NetKind::Wire,
                        range: literal_range(&port.range, msb, lsb, port.loc),
                        loc: port.loc,
                    }));
                    let local = Expr::ident(wire, inst.loc);
                    match (port.dir, conn) {
                        (Direction::Output, Some(e)) => {
                            if !is_assignable(&e) {
                                return Err(FrontendError::BadConnection { instance: path, port: port.name.clone() });
                            }
                            self.items.push(Item::Assign(ContAssign { lhs: e, rhs: local.clone(), loc: inst.loc }));
                        }
                        (Direction::Output, None) => {}
                        (_, Some(e)) => {
                            self.items.push(Item::Assign(ContAssign { lhs: local.clone(), rhs: e, loc: inst.loc }));
                        }
                        (_, None) => {
                            let z = Expr::new(
                                ExprKind::Number { text: "1'bz".into(), value: None, width: Some(1) },
                                inst.loc,
                            );
                            self.items.push(Item::Assign(ContAssign { lhs: local.clone(), rhs: z, loc: inst.loc }));
                        }
                    }
                    subst.insert(port.name.clone(), local);
                }
            }
        }
        self.stack.push(inst.module.clone());
        self.inline_body(child, &child_prefix, &params, subst)?;
        self.stack.pop();
        Ok(())
    }
}

fn is_assignable(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Ident(_) => true,
        ExprKind::Index(b, _) | ExprKind::Slice { base: b, .. } => is_assignable(b),
        ExprKind::Concat(v) => v.iter().all(is_assignable),
        _ => false,
    }
}

/// Replaces identifiers according to `subst`; unknown names are kept.
pub fn substitute(e: &Expr, subst: &BTreeMap<String, Expr>) -> Expr {
    let mut out = e.clone();
    out.walk_mut(&mut |x| {
        if let ExprKind::Ident(n) = &x.kind {
            if let Some(r) = subst.get(n) {
                let loc = x.loc;
                *x = Expr { kind: r.kind.clone(), loc };
            }
        }
    });
    out
}

fn fold(op: BinaryOp, mut ins: Vec<Expr>, loc: Loc) -> Expr {
    let first = ins.remove(0);
    ins.into_iter().fold(first, |acc, e| Expr::new(ExprKind::Binary(op, Box::new(acc), Box::new(e)), loc))
}

/// Gate primitive → continuous assigns.
pub fn lower_gate(gate: GateKind, mut terms: Vec<Expr>, loc: Loc) -> Vec<ContAssign> {
    match gate {
        GateKind::Not | GateKind::Buf => {
            let input = terms.pop().expect("gate has terminals");
            terms
                .into_iter()
                .map(|out| {
                    let rhs = if gate == GateKind::Not {
                        Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(input.clone())), loc)
                    } else {
                        input.clone()
                    };
                    ContAssign { lhs: out, rhs, loc }
                })
                .collect()
        }
        _ => {
            let out = terms.remove(0);
            let (inner, outer) = match gate {
                GateKind::And => (BinaryOp::And, BinaryOp::And),
                GateKind::Or => (BinaryOp::Or, BinaryOp::Or),
                GateKind::Xor => (BinaryOp::Xor, BinaryOp::Xor),
                GateKind::Nand => (BinaryOp::And, BinaryOp::Nand),
                GateKind::Nor => (BinaryOp::Or, BinaryOp::Nor),
                GateKind::Xnor => (BinaryOp::Xor, BinaryOp::Xnor),
                GateKind::Not | GateKind::Buf => unreachable!(),
            };
            let rhs = if terms.len() == 1 {
                let t = terms.remove(0);
                match gate {
                    GateKind::Nand | GateKind::Nor | GateKind::Xnor => {
                        Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(t)), loc)
                    }
                    _ => t,
                }
            } else {
                let last = terms.pop().unwrap();
                let head = fold(inner, terms, loc);
                Expr::new(ExprKind::Binary(outer, Box::new(head), Box::new(last)), loc)
            };
            vec![ContAssign { lhs: out, rhs, loc }]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn flat(src: &str, top: &str) -> Result<FlatModule, FrontendError> {
        flatten_hierarchy(&parse(src, "t.v").unwrap(), top)
    }

    const FA: &str = "module fa(input a, b, ci, output s, co);\n wire w;\n assign w = a ^ b;\n\
                      assign s = w ^ ci;\n assign co = (a & b) | (w & ci);\nendmodule\n";

    #[test]
    fn mangles_internal_wires() {
        let src = format!(
            "{FA}module top(input x, y, z, output s, c); fa u1(.a(x), .b(y), .ci(z), .s(s), .co(c)); endmodule"
        );
        let f = flat(&src, "top").unwrap();
        assert!(f.module.nets().any(|n| n.name == "u1.w"));
        assert_eq!(f.module.instances().count(), 0);
        assert_eq!(f.module.ports.len(), 5);
        // port substitution: `s` is driven directly
        assert!(f.module.assigns().any(|a| a.lhs.as_ident() == Some("s")));
    }

    #[test]
    fn two_instances_disjoint() {
        let src = format!(
            "{FA}module top(input a, b, c, output s1, s2, c1, c2);\n fa u1(a, b, c, s1, c1);\n fa u2(b, c, a, s2, c2);\nendmodule"
        );
        let f = flat(&src, "top").unwrap();
        let names: Vec<&str> = f.module.nets().map(|n| n.name.as_str()).collect();
        assert!(names.contains(&"u1.w") && names.contains(&"u2.w"));
    }

    #[test]
    fn xor_primitive_lowering() {
        let f = flat("module n(input a, b, output s); xor g1(s, a, b); endmodule", "n").unwrap();
        let a: Vec<_> = f.module.assigns().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].lhs.as_ident(), Some("s"));
        assert!(matches!(&a[0].rhs.kind, ExprKind::Binary(BinaryOp::Xor, x, y)
            if x.as_ident() == Some("a") && y.as_ident() == Some("b")));
    }

    #[test]
    fn nand3_lowering() {
        let f = flat("module n(input a, b, c, output y); nand (y, a, b, c); endmodule", "n").unwrap();
        let a = f.module.assigns().next().unwrap();
        let ExprKind::Binary(BinaryOp::Nand, head, last) = &a.rhs.kind else { panic!("{:?}", a.rhs) };
        assert_eq!(last.as_ident(), Some("c"));
        assert!(matches!(&head.kind, ExprKind::Binary(BinaryOp::And, _, _)));
    }

    #[test]
    fn expression_connections_use_port_wires() {
        let src = format!(
            "{FA}module top(input [1:0] x, input z, output [1:0] o); fa u1(x[0], x[1], ~z, o[0], o[1]); endmodule"
        );
        let f = flat(&src, "top").unwrap();
        for w in ["u1.a", "u1.b", "u1.ci", "u1.s", "u1.co"] {
            assert!(f.is_declared(w), "{w}");
        }
        assert!(f.module.assigns().any(|a| matches!(&a.lhs.kind, ExprKind::Index(..))));
    }

    #[test]
    fn parameter_override_before_widths() {
        let src = "module r #(parameter W = 2)(input [W-1:0] d, output [W-1:0] q); wire [W:0] t; assign t = {1'b0, d}; assign q = t[W-1:0]; endmodule\n\
                   module top(input [7:0] d, output [7:0] q); r #(.W(8)) u(.d(d), .q(q)); endmodule";
        let f = flat(src, "top").unwrap();
        assert_eq!(f.widths["u.t"], (8, 0));
        let a: Vec<_> = f.module.assigns().collect();
        // W folded into a literal
        let ExprKind::Slice { left, .. } = &a[1].rhs.kind else { panic!() };
        assert!(matches!(&left.kind, ExprKind::Binary(BinaryOp::Sub, l, _)
            if matches!(&l.kind, ExprKind::Number { value: Some(8), .. })));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            flat("module t(input a); nope u(a); endmodule", "t"),
            Err(FrontendError::UnknownModule { .. })
        ));
        let rec = "module a(input x); b u(x); endmodule module b(input x); a u(x); endmodule";
        match flat(rec, "a") {
            Err(FrontendError::RecursiveInstantiation { cycle }) => assert_eq!(cycle, ["a", "b", "a"]),
            e => panic!("{e:?}"),
        }
        let src = format!("{FA}module t(input a, output s); fa u(a, s); endmodule");
        assert!(matches!(flat(&src, "t"), Err(FrontendError::PortArityMismatch { expected: 5, got: 2, .. })));
        let src = format!("{FA}module t(input a, output s); fa u(.a(a), .q(s)); endmodule");
        assert!(matches!(flat(&src, "t"), Err(FrontendError::UnknownPort { .. })));
        assert!(matches!(flat("module t; endmodule", "x"), Err(FrontendError::UnknownModule { .. })));
    }

    #[test]
    fn infer_top_module() {
        let src = format!("{FA}module top(input a, b, c, output s, co); fa u(a, b, c, s, co); endmodule");
        assert_eq!(infer_top(&parse(&src, "t.v").unwrap()).unwrap(), "top");
        let two = "module a; endmodule module b; endmodule";
        assert!(matches!(infer_top(&parse(two, "t.v").unwrap()), Err(FrontendError::AmbiguousTop { .. })));
    }
}
