//! Debug pretty-printer. Output re-parses to a structurally equal module;
//! formatting of the original is not preserved.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

const UNARY_PREC: u8 = 11;
const TERNARY_PREC: u8 = 0;

fn prec_of(e: &Expr) -> u8 {
    match e {
        Expr::Ternary { .. } => TERNARY_PREC,
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { .. } => UNARY_PREC,
        _ => u8::MAX,
    }
}

fn write_expr(f: &mut Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    let paren = prec_of(e) < min_prec;
    if paren {
        f.write_char('(')?;
    }
    match e {
        Expr::Ident(name) => f.write_str(name)?,
        Expr::Literal(lit) => f.write_str(&lit.text)?,
        Expr::Unary { op, operand } => {
            f.write_str(op.symbol())?;
            // nested unary operators are parenthesized so `~ &a` cannot fuse into `~&a`
            write_expr(f, operand, UNARY_PREC + 1)?;
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            write_expr(f, lhs, p)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, rhs, p + 1)?;
        }
        Expr::Ternary {
            cond,
            then_expr,
            else_expr,
        } => {
            write_expr(f, cond, 1)?;
            f.write_str(" ? ")?;
            write_expr(f, then_expr, TERNARY_PREC)?;
            f.write_str(" : ")?;
            write_expr(f, else_expr, TERNARY_PREC)?;
        }
        Expr::Concat(items) => {
            f.write_char('{')?;
            write_list(f, items)?;
            f.write_char('}')?;
        }
        Expr::Replicate { count, items } => {
            f.write_char('{')?;
            write_expr(f, count, u8::MAX)?;
            f.write_char('{')?;
            write_list(f, items)?;
            f.write_str("}}")?;
        }
        Expr::Index { base, index } => {
            write!(f, "{base}[")?;
            write_expr(f, index, TERNARY_PREC)?;
            f.write_char(']')?;
        }
        Expr::Slice { base, msb, lsb } => write!(f, "{base}[{msb}:{lsb}]")?,
        Expr::IndexedSlice {
            base,
            start,
            width,
            ascending,
        } => {
            write!(f, "{base}[")?;
            write_expr(f, start, TERNARY_PREC)?;
            write!(f, " {} {width}]", if *ascending { "+:" } else { "-:" })?;
        }
    }
    if paren {
        f.write_char(')')?;
    }
    Ok(())
}

fn write_list(f: &mut Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_expr(f, item, TERNARY_PREC)?;
    }
    Ok(())
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_expr(f, self, TERNARY_PREC)
    }
}

fn indent(f: &mut Formatter<'_>, depth: usize) -> fmt::Result {
    for _ in 0..depth {
        f.write_str("  ")?;
    }
    Ok(())
}

fn write_stmt(f: &mut Formatter<'_>, s: &Stmt, depth: usize) -> fmt::Result {
    indent(f, depth)?;
    match s {
        Stmt::Empty => f.write_str(";\n"),
        Stmt::Block(stmts) => {
            f.write_str("begin\n")?;
            for inner in stmts {
                write_stmt(f, inner, depth + 1)?;
            }
            indent(f, depth)?;
            f.write_str("end\n")
        }
        Stmt::Assign {
            target,
            value,
            blocking,
        } => writeln!(f, "{target} {} {value};", if *blocking { "=" } else { "<=" }),
        Stmt::If {
            cond,
            then_branch,
            else_branch,
        } => {
            writeln!(f, "if ({cond})")?;
            // a bare nested `if` would capture our `else`
            let wrap = else_branch.is_some() && matches!(**then_branch, Stmt::If { .. });
            if wrap {
                indent(f, depth)?;
                f.write_str("begin\n")?;
                write_stmt(f, then_branch, depth + 1)?;
                indent(f, depth)?;
                f.write_str("end\n")?;
            } else {
                write_stmt(f, then_branch, depth + 1)?;
            }
            if let Some(e) = else_branch {
                indent(f, depth)?;
                f.write_str("else\n")?;
                write_stmt(f, e, depth + 1)?;
            }
            Ok(())
        }
        Stmt::Case {
            kind,
            subject,
            items,
        } => {
            let kw = match kind {
                CaseKind::Case => "case",
                CaseKind::Casez => "casez",
                CaseKind::Casex => "casex",
            };
            writeln!(f, "{kw} ({subject})")?;
            for item in items {
                indent(f, depth + 1)?;
                if item.labels.is_empty() {
                    f.write_str("default:\n")?;
                } else {
                    let labels: Vec<String> = item.labels.iter().map(|l| l.to_string()).collect();
                    writeln!(f, "{}:", labels.join(", "))?;
                }
                write_stmt(f, &item.body, depth + 2)?;
            }
            indent(f, depth)?;
            f.write_str("endcase\n")
        }
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_stmt(f, self, 0)
    }
}

fn range_text(r: &Option<Range>) -> String {
    r.map(|r| format!(" [{}:{}]", r.msb, r.lsb)).unwrap_or_default()
}

fn kind_text(k: NetKind) -> &'static str {
    match k {
        NetKind::Wire => "wire",
        NetKind::Reg => "reg",
    }
}

impl Display for ModuleDecl {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "module {}", self.name)?;
        if self.ports.is_empty() {
            f.write_str(";\n")?;
        } else {
            f.write_str(" (\n")?;
            for (i, p) in self.ports.iter().enumerate() {
                let sep = if i + 1 < self.ports.len() { "," } else { "" };
                writeln!(
                    f,
                    "  {} {}{} {}{sep}",
                    p.direction.keyword(),
                    kind_text(p.kind),
                    range_text(&p.range),
                    p.name
                )?;
            }
            f.write_str(");\n")?;
        }
        for p in &self.params {
            let kw = if p.local { "localparam" } else { "parameter" };
            writeln!(f, "  {kw} {} = {};", p.name, p.value.text)?;
        }
        for n in &self.nets {
            writeln!(f, "  {}{} {};", kind_text(n.kind), range_text(&n.range), n.name)?;
        }
        for a in &self.assigns {
            writeln!(f, "  assign {} = {};", a.target, a.value)?;
        }
        for b in &self.always_blocks {
            f.write_str("  always @")?;
            match &b.sensitivity {
                Sensitivity::Star => f.write_str("(*)")?,
                Sensitivity::Events(events) => {
                    let parts: Vec<String> = events
                        .iter()
                        .map(|e| match e.edge {
                            Some(Edge::Posedge) => format!("posedge {}", e.signal),
                            Some(Edge::Negedge) => format!("negedge {}", e.signal),
                            None => e.signal.clone(),
                        })
                        .collect();
                    write!(f, "({})", parts.join(" or "))?;
                }
            }
            f.write_char('\n')?;
            write_stmt(f, &b.body, 2)?;
        }
        for inst in &self.instances {
            write!(f, "  {} {} (", inst.module_name, inst.instance_name)?;
            let conns: Vec<String> = inst
                .connections
                .iter()
                .map(|c| {
                    let actual = c.actual.as_ref().map(|e| e.to_string()).unwrap_or_default();
                    match &c.port {
                        PortRef::Named(n) => format!(".{n}({actual})"),
                        PortRef::Positional(_) => actual,
                    }
                })
                .collect();
            f.write_str(&conns.join(", "))?;
            f.write_str(");\n")?;
        }
        f.write_str("endmodule\n")
    }
}
