// SPDX-License-Identifier: Apache-2.0

//! Verilog text from an AST. Sub-expressions are parenthesized, so parsing
//! the output yields the same tree (up to locations).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::ast::*;

pub fn emit_ast(ast: &Ast) -> String {
    let mut out = String::new();
    for (i, m) in ast.modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&emit_module(m));
    }
    out
}

pub fn emit_module(m: &ModuleDecl) -> String {
    let mut out = String::new();
    let header_params: Vec<&ParamDecl> = m.params().filter(|p| !p.local).collect();
    let _ = write!(out, "module {}", ident(&m.name));
    if !header_params.is_empty() {
        let ps: Vec<String> =
            header_params.iter().map(|p| format!("parameter {} = {}", ident(&p.name), expr(&p.value))).collect();
        let _ = write!(out, " #({})", ps.join(", "));
    }
    let ports: Vec<String> = m
        .ports
        .iter()
        .map(|p| {
            let dir = match p.dir {
                Direction::Input => "input",
                Direction::Output => "output",
                Direction::Inout => "inout",
            };
            let kind = match p.kind {
                NetKind::Wire => "wire",
                NetKind::Reg => "reg",
            };
            format!("{dir} {kind} {}{}", range(&p.range), ident(&p.name))
        })
        .collect();
    if ports.is_empty() {
        out.push_str(";\n");
    } else {
        let _ = write!(out, " (\n  {}\n);\n", ports.join(",\n  "));
    }
    for item in &m.items {
        match item {
            Item::Param(p) if !p.local => {}
            Item::Param(p) => {
                let _ = writeln!(out, "  localparam {} = {};", ident(&p.name), expr(&p.value));
            }
            Item::Net(n) => {
                let kind = match n.kind {
                    NetKind::Wire => "wire",
                    NetKind::Reg => "reg",
                };
                let _ = writeln!(out, "  {kind} {}{};", range(&n.range), ident(&n.name));
            }
            Item::Assign(a) => {
                let _ = writeln!(out, "  assign {} = {};", expr(&a.lhs), expr(&a.rhs));
            }
            Item::Always(a) => {
                let sens = match &a.sensitivity {
                    Sensitivity::Star => String::from("*"),
                    Sensitivity::List(l) => {
                        let parts: Vec<String> = l
                            .iter()
                            .map(|(e, x)| match e {
                                Edge::Posedge => format!("posedge {}", expr(x)),
                                Edge::Negedge => format!("negedge {}", expr(x)),
                                Edge::Any => expr(x),
                            })
                            .collect();
                        parts.join(" or ")
                    }
                };
                let _ = write!(out, "  always @({sens})");
                stmt(&mut out, &a.body, 1);
            }
            Item::Gate(g) => {
                let terms: Vec<String> = g.terminals.iter().map(expr).collect();
                let name = g.name.as_deref().map(|n| format!(" {}", ident(n))).unwrap_or_default();
                let _ = writeln!(out, "  {}{name} ({});", g.gate.keyword(), terms.join(", "));
            }
            Item::Inst(i) => {
                let params = match &i.params {
                    None => String::new(),
                    Some(ParamOverrides::Positional(v)) => {
                        format!(" #({})", v.iter().map(expr).collect::<Vec<_>>().join(", "))
                    }
                    Some(ParamOverrides::Named(v)) => {
                        let ps: Vec<String> = v.iter().map(|(n, e)| format!(".{}({})", ident(n), expr(e))).collect();
                        format!(" #({})", ps.join(", "))
                    }
                };
                let conns = match &i.connections {
                    Connections::Positional(v) => {
                        v.iter().map(|e| e.as_ref().map(expr).unwrap_or_default()).collect::<Vec<_>>().join(", ")
                    }
                    Connections::Named(v) => v
                        .iter()
                        .map(|(n, e)| format!(".{}({})", ident(n), e.as_ref().map(expr).unwrap_or_default()))
                        .collect::<Vec<_>>()
                        .join(", "),
                };
                let _ = writeln!(out, "  {}{params} {} ({conns});", ident(&i.module), ident(&i.name));
            }
        }
    }
    out.push_str("endmodule\n");
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Writes a statement that follows text already on the current line.
fn stmt(out: &mut String, s: &Stmt, level: usize) {
    match s {
        Stmt::Block(v) => {
            out.push_str(" begin\n");
            for s in v {
                indent(out, level + 1);
                stmt_line(out, s, level + 1);
            }
            indent(out, level);
            out.push_str("end\n");
        }
        _ => {
            out.push('\n');
            indent(out, level + 1);
            stmt_line(out, s, level + 1);
        }
    }
}

/// Writes a statement at the start of an indented line.
fn stmt_line(out: &mut String, s: &Stmt, level: usize) {
    match s {
        Stmt::Null => out.push_str(";\n"),
        Stmt::Assign { lhs, rhs, blocking, .. } => {
            let op = if *blocking { "=" } else { "<=" };
            let _ = writeln!(out, "{} {op} {};", expr(lhs), expr(rhs));
        }
        Stmt::Block(_) => {
            out.push_str("begin");
            // reuse block printing minus the leading space
            let mut inner = String::new();
            stmt(&mut inner, s, level);
            out.push_str(&inner[" begin".len()..]);
        }
        Stmt::If { cond, then_branch, else_branch, .. } => {
            let _ = write!(out, "if ({})", expr(cond));
            stmt(out, then_branch, level);
            if let Some(e) = else_branch {
                indent(out, level);
                out.push_str("else");
                stmt(out, e, level);
            }
        }
        Stmt::Case { kind, subject, arms, default, .. } => {
            let kw = match kind {
                CaseKind::Case => "case",
                CaseKind::Casex => "casex",
                CaseKind::Casez => "casez",
            };
            let _ = writeln!(out, "{kw} ({})", expr(subject));
            for a in arms {
                indent(out, level + 1);
                let labels: Vec<String> = a.labels.iter().map(expr).collect();
                let _ = write!(out, "{}:", labels.join(", "));
                stmt(out, &a.body, level + 1);
            }
            if let Some(d) = default {
                indent(out, level + 1);
                out.push_str("default:");
                stmt(out, d, level + 1);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
    }
}

fn range(r: &Option<Range>) -> String {
    match r {
        None => String::new(),
        Some(r) => format!("[{}:{}] ", expr(&r.msb), expr(&r.lsb)),
    }
}

/// Plain identifiers as-is; anything else escaped.
pub fn ident(name: &str) -> String {
    let mut chars = name.chars();
    let plain = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$');
    if plain {
        String::from(name)
    } else {
        format!("\\{name} ")
    }
}

fn is_primary(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Ident(_)
            | ExprKind::Number { .. }
            | ExprKind::Concat(_)
            | ExprKind::Repeat(..)
            | ExprKind::Index(..)
            | ExprKind::Slice { .. }
    )
}

fn operand(e: &Expr) -> String {
    if is_primary(e) {
        expr(e)
    } else {
        format!("({})", expr(e))
    }
}

pub fn binary_op_str(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "+",
        BinaryOp::Sub => "-",
        BinaryOp::Mul => "*",
        BinaryOp::Div => "/",
        BinaryOp::Mod => "%",
        BinaryOp::Pow => "**",
        BinaryOp::Shl => "<<",
        BinaryOp::Shr => ">>",
        BinaryOp::AShl => "<<<",
        BinaryOp::AShr => ">>>",
        BinaryOp::Lt => "<",
        BinaryOp::Le => "<=",
        BinaryOp::Gt => ">",
        BinaryOp::Ge => ">=",
        BinaryOp::Eq => "==",
        BinaryOp::Ne => "!=",
        BinaryOp::CaseEq => "===",
        BinaryOp::CaseNe => "!==",
        BinaryOp::And | BinaryOp::Nand => "&",
        BinaryOp::Or | BinaryOp::Nor => "|",
        BinaryOp::Xor => "^",
        BinaryOp::Xnor => "~^",
        BinaryOp::LAnd => "&&",
        BinaryOp::LOr => "||",
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Ident(n) => ident(n),
        ExprKind::Number { text, .. } => text.clone(),
        ExprKind::Unary(op, a) => {
            let o = match op {
                UnaryOp::Plus => "+",
                UnaryOp::Minus => "-",
                UnaryOp::Not => "~",
                UnaryOp::LNot => "!",
                UnaryOp::RedAnd => "&",
                UnaryOp::RedOr => "|",
                UnaryOp::RedXor => "^",
                UnaryOp::RedNand => "~&",
                UnaryOp::RedNor => "~|",
                UnaryOp::RedXnor => "~^",
            };
            format!("{o}{}", operand(a))
        }
        ExprKind::Binary(op, a, b) => {
            let inner = format!("{} {} {}", operand(a), binary_op_str(*op), operand(b));
            match op {
                BinaryOp::Nand | BinaryOp::Nor => format!("~({inner})"),
                _ => inner,
            }
        }
        ExprKind::Ternary(c, a, b) => format!("{} ? {} : {}", operand(c), operand(a), operand(b)),
        ExprKind::Concat(v) => format!("{{{}}}", v.iter().map(expr).collect::<Vec<_>>().join(", ")),
        ExprKind::Repeat(n, v) => {
            format!("{{{}{{{}}}}}", operand(n), v.iter().map(expr).collect::<Vec<_>>().join(", "))
        }
        ExprKind::Index(b, i) => format!("{}[{}]", operand(b), expr(i)),
        ExprKind::Slice { base, kind, left, right } => {
            let sep = match kind {
                PartSelectKind::Range => ":",
                PartSelectKind::Up => "+:",
                PartSelectKind::Down => "-:",
            };
            format!("{}[{}{sep}{}]", operand(base), expr(left), expr(right))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    /// Structural equality ignoring locations.
    fn strip(ast: &mut Ast) {
        ast.files.clear();
        let z = Loc::default();
        for m in &mut ast.modules {
            m.loc = z;
            for p in &mut m.ports {
                p.loc = z;
                if let Some(r) = &mut p.range {
                    r.msb.walk_mut(&mut |e| e.loc = z);
                    r.lsb.walk_mut(&mut |e| e.loc = z);
                }
            }
            m.ansi = true;
            for it in &mut m.items {
                match it {
                    Item::Net(n) => {
                        n.loc = z;
                        if let Some(r) = &mut n.range {
                            r.msb.walk_mut(&mut |e| e.loc = z);
                            r.lsb.walk_mut(&mut |e| e.loc = z);
                        }
                    }
                    Item::Param(p) => {
                        p.loc = z;
                        p.value.walk_mut(&mut |e| e.loc = z);
                    }
                    Item::Assign(a) => {
                        a.loc = z;
                        a.lhs.walk_mut(&mut |e| e.loc = z);
                        a.rhs.walk_mut(&mut |e| e.loc = z);
                    }
                    Item::Always(a) => {
                        a.loc = z;
                        if let Sensitivity::List(l) = &mut a.sensitivity {
                            for (_, e) in l {
                                e.walk_mut(&mut |x| x.loc = z);
                            }
                        }
                        a.body.exprs_mut(&mut |e| e.walk_mut(&mut |x| x.loc = z));
                        strip_stmt_locs(&mut a.body);
                    }
                    Item::Gate(g) => {
                        g.loc = z;
                        g.terminals.iter_mut().for_each(|t| t.walk_mut(&mut |x| x.loc = z));
                    }
                    Item::Inst(i) => {
                        i.loc = z;
                        match &mut i.connections {
                            Connections::Positional(v) => {
                                v.iter_mut().flatten().for_each(|e| e.walk_mut(&mut |x| x.loc = z))
                            }
                            Connections::Named(v) => v
                                .iter_mut()
                                .filter_map(|(_, e)| e.as_mut())
                                .for_each(|e| e.walk_mut(&mut |x| x.loc = z)),
                        }
                        if let Some(ParamOverrides::Named(v)) = &mut i.params {
                            v.iter_mut().for_each(|(_, e)| e.walk_mut(&mut |x| x.loc = z));
                        }
                    }
                }
            }
        }
    }

    fn strip_stmt_locs(s: &mut Stmt) {
        let z = Loc::default();
        match s {
            Stmt::Block(v) => v.iter_mut().for_each(strip_stmt_locs),
            Stmt::Assign { loc, .. } => *loc = z,
            Stmt::If { loc, then_branch, else_branch, .. } => {
                *loc = z;
                strip_stmt_locs(then_branch);
                if let Some(e) = else_branch {
                    strip_stmt_locs(e);
                }
            }
            Stmt::Case { loc, arms, default, .. } => {
                *loc = z;
                arms.iter_mut().for_each(|a| strip_stmt_locs(&mut a.body));
                if let Some(d) = default {
                    strip_stmt_locs(d);
                }
            }
            Stmt::Null => {}
        }
    }

    #[test]
    fn reparse_is_structurally_identical() {
        let src = "module sub #(parameter W = 4)(input [W-1:0] a, output [W-1:0] y); assign y = ~a; endmodule\n\
                   module top(input clk, input [3:0] a, b, input s, output reg [3:0] q, output [7:0] z, output p);\n\
                   localparam K = 2;\n wire [3:0] t;\n sub #(.W(4)) u0 (.a(a), .y(t));\n xor g (p, a[0], b[1]);\n\
                   assign z = {{2{a[1:0]}}, b[K +: 2], 2'b01} + (a * b - (a ^ ~b));\n\
                   always @(posedge clk) begin if (s) q <= t; else begin case (a) 4'd0, 4'd1: q <= b; default: q <= s ? a : b; endcase end end\n\
                   endmodule";
        let mut a = parse(src, "a.v").unwrap();
        let text = emit_ast(&a);
        let mut b = parse(&text, "b.v").unwrap_or_else(|e| panic!("{e}\n{text}"));
        strip(&mut a);
        strip(&mut b);
        assert_eq!(a, b, "{text}");
    }

    #[test]
    fn escapes_odd_identifiers() {
        assert_eq!(ident("abc_1"), "abc_1");
        assert_eq!(ident("u1.w"), "\\u1.w ");
    }
}
