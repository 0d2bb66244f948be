//! Two-state evaluation of combinational modules, used by the influence oracle.
//!
//! Widths follow the Verilog sizing rules for unsigned operands: context
//! determined for arithmetic and bitwise operators, self determined for
//! comparisons, reductions, shifts amounts and concatenation items. `x`/`z`
//! literal bits read as zero.

use std::collections::HashMap;

use crate::frontend::{BinaryOp, CaseKind, Expr, ModuleDecl, Range, Stmt, UnaryOp};

pub(crate) fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

pub(crate) struct Evaluator<'m> {
    module: &'m ModuleDecl,
    pub values: HashMap<&'m str, u128>,
}

impl<'m> Evaluator<'m> {
    pub fn new(module: &'m ModuleDecl) -> Self {
        let values = module.signal_names().map(|n| (n, 0)).collect();
        Evaluator { module, values }
    }

    fn range(&self, name: &str) -> Option<Range> {
        self.module.signal_range(name).flatten()
    }

    fn width_of(&self, name: &str) -> u32 {
        self.module.signal_width(name).unwrap_or(1)
    }

    fn read(&self, name: &str) -> u128 {
        self.values.get(name).copied().unwrap_or(0)
    }

    fn offset(&self, name: &str, index: i64) -> Option<u32> {
        match self.range(name) {
            Some(r) => r.offset_of(index),
            None => (index == 0).then_some(0),
        }
    }

    pub fn self_width(&self, e: &Expr) -> u32 {
        match e {
            Expr::Ident(n) => self.width_of(n),
            Expr::Literal(l) => l.width.unwrap_or(32),
            Expr::Unary { op, operand } => match op {
                UnaryOp::BitNot | UnaryOp::Neg | UnaryOp::Plus => self.self_width(operand),
                _ => 1,
            },
            Expr::Binary { op, lhs, rhs } => match op {
                BinaryOp::Mul
                | BinaryOp::Div
                | BinaryOp::Mod
                | BinaryOp::Add
                | BinaryOp::Sub
                | BinaryOp::BitAnd
                | BinaryOp::BitOr
                | BinaryOp::BitXor
                | BinaryOp::BitXnor => self.self_width(lhs).max(self.self_width(rhs)),
                BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr => self.self_width(lhs),
                _ => 1,
            },
            Expr::Ternary {
                then_expr,
                else_expr,
                ..
            } => self.self_width(then_expr).max(self.self_width(else_expr)),
            Expr::Concat(items) => items.iter().map(|i| self.self_width(i)).sum::<u32>().min(128),
            Expr::Replicate { count, items } => {
                let n = self.eval_self(count) as u32;
                (n * items.iter().map(|i| self.self_width(i)).sum::<u32>()).min(128)
            }
            Expr::Index { .. } => 1,
            Expr::Slice { msb, lsb, .. } => ((msb - lsb).unsigned_abs() + 1) as u32,
            Expr::IndexedSlice { width, .. } => *width,
        }
    }

    pub fn eval_self(&self, e: &Expr) -> u128 {
        self.eval(e, self.self_width(e))
    }

    /// Value of `e` evaluated in a context of width `ctx`.
    pub fn eval(&self, e: &Expr, ctx: u32) -> u128 {
        let w = ctx.max(self.self_width(e)).min(128);
        let m = mask(w);
        let v = match e {
            Expr::Ident(n) => self.read(n),
            Expr::Literal(l) => l.value & !l.xz_mask,
            Expr::Unary { op, operand } => match op {
                UnaryOp::BitNot => !self.eval(operand, w),
                UnaryOp::Neg => self.eval(operand, w).wrapping_neg(),
                UnaryOp::Plus => self.eval(operand, w),
                UnaryOp::LogicNot => (self.eval_self(operand) == 0) as u128,
                _ => {
                    let ow = self.self_width(operand);
                    let v = self.eval(operand, ow);
                    let ones = v.count_ones();
                    let r = match op {
                        UnaryOp::ReduceAnd => v == mask(ow),
                        UnaryOp::ReduceNand => v != mask(ow),
                        UnaryOp::ReduceOr => v != 0,
                        UnaryOp::ReduceNor => v == 0,
                        UnaryOp::ReduceXor => ones % 2 == 1,
                        _ => ones.is_multiple_of(2),
                    };
                    r as u128
                }
            },
            Expr::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs, w),
            Expr::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                if self.eval_self(cond) != 0 {
                    self.eval(then_expr, w)
                } else {
                    self.eval(else_expr, w)
                }
            }
            Expr::Concat(items) => self.concat(items),
            Expr::Replicate { count, items } => {
                let n = self.eval_self(count);
                let unit_w: u32 = items.iter().map(|i| self.self_width(i)).sum();
                let unit = self.concat(items);
                let mut acc = 0u128;
                for _ in 0..n {
                    acc = acc.checked_shl(unit_w).unwrap_or(0) | unit;
                }
                acc
            }
            Expr::Index { base, index } => {
                let idx = self.eval_self(index) as i64;
                match self.offset(base, idx) {
                    Some(off) => (self.read(base) >> off) & 1,
                    None => 0,
                }
            }
            Expr::Slice { base, msb, lsb } => self.part(base, (*lsb).min(*msb), (*lsb).max(*msb)),
            Expr::IndexedSlice {
                base,
                start,
                width,
                ascending,
            } => {
                let s = self.eval_self(start) as i64;
                let (lo, hi) = if *ascending {
                    (s, s + *width as i64 - 1)
                } else {
                    (s - *width as i64 + 1, s)
                };
                self.part(base, lo, hi)
            }
        };
        v & m
    }

    /// Bits of `base` at declared indices `lo..=hi`, packed from the lowest offset.
    fn part(&self, base: &str, lo: i64, hi: i64) -> u128 {
        let value = self.read(base);
        let offsets: Vec<Option<u32>> = (lo..=hi).map(|i| self.offset(base, i)).collect();
        let Some(min_off) = offsets.iter().flatten().min().copied() else {
            return 0;
        };
        let mut out = 0u128;
        for off in offsets.into_iter().flatten() {
            out |= ((value >> off) & 1) << (off - min_off);
        }
        out
    }

    fn concat(&self, items: &[Expr]) -> u128 {
        let mut acc = 0u128;
        for item in items {
            let w = self.self_width(item);
            acc = acc.checked_shl(w).unwrap_or(0) | self.eval(item, w);
        }
        acc
    }

    fn binary(&self, op: BinaryOp, lhs: &Expr, rhs: &Expr, w: u32) -> u128 {
        use BinaryOp::*;
        match op {
            Mul | Div | Mod | Add | Sub | BitAnd | BitOr | BitXor | BitXnor => {
                let a = self.eval(lhs, w);
                let b = self.eval(rhs, w);
                match op {
                    Mul => a.wrapping_mul(b),
                    Div => a.checked_div(b).unwrap_or(0),
                    Mod => a.checked_rem(b).unwrap_or(0),
                    Add => a.wrapping_add(b),
                    Sub => a.wrapping_sub(b),
                    BitAnd => a & b,
                    BitOr => a | b,
                    BitXor => a ^ b,
                    _ => !(a ^ b),
                }
            }
            Shl | Shr | AShl | AShr => {
                let a = self.eval(lhs, w);
                let amount = self.eval_self(rhs);
                if amount >= 128 {
                    0
                } else if matches!(op, Shl | AShl) {
                    a << amount
                } else {
                    a >> amount
                }
            }
            Lt | Le | Gt | Ge | Eq | Ne | CaseEq | CaseNe => {
                let cw = self.self_width(lhs).max(self.self_width(rhs));
                let a = self.eval(lhs, cw);
                let b = self.eval(rhs, cw);
                let r = match op {
                    Lt => a < b,
                    Le => a <= b,
                    Gt => a > b,
                    Ge => a >= b,
                    Eq | CaseEq => a == b,
                    _ => a != b,
                };
                r as u128
            }
            LogicAnd => ((self.eval_self(lhs) != 0) && (self.eval_self(rhs) != 0)) as u128,
            LogicOr => ((self.eval_self(lhs) != 0) || (self.eval_self(rhs) != 0)) as u128,
        }
    }

    fn lvalue_width(&self, target: &Expr) -> u32 {
        match target {
            Expr::Concat(items) => items.iter().map(|i| self.lvalue_width(i)).sum(),
            other => self.self_width(other),
        }
    }

    /// Writes the low bits of `value` into an assignment target.
    fn write(&mut self, target: &Expr, value: u128) {
        match target {
            Expr::Ident(n) => {
                let w = self.width_of(n);
                if let Some(slot) = self.values.get_mut(n.as_str()) {
                    *slot = value & mask(w);
                }
            }
            Expr::Index { base, index } => {
                let idx = self.eval_self(index) as i64;
                if let Some(off) = self.offset(base, idx) {
                    self.write_bits(base, &[Some(off)], value);
                }
            }
            Expr::Slice { base, msb, lsb } => {
                let offs: Vec<_> = ((*lsb).min(*msb)..=(*lsb).max(*msb)).map(|i| self.offset(base, i)).collect();
                self.write_bits(base, &offs, value);
            }
            Expr::IndexedSlice {
                base,
                start,
                width,
                ascending,
            } => {
                let s = self.eval_self(start) as i64;
                let (lo, hi) = if *ascending {
                    (s, s + *width as i64 - 1)
                } else {
                    (s - *width as i64 + 1, s)
                };
                let offs: Vec<_> = (lo..=hi).map(|i| self.offset(base, i)).collect();
                self.write_bits(base, &offs, value);
            }
            Expr::Concat(items) => {
                let mut shift = 0u32;
                for item in items.iter().rev() {
                    let w = self.lvalue_width(item);
                    self.write(item, value.checked_shr(shift).unwrap_or(0));
                    shift += w;
                }
            }
            _ => {}
        }
    }

    fn write_bits(&mut self, base: &str, offsets: &[Option<u32>], value: u128) {
        let Some(min_off) = offsets.iter().flatten().min().copied() else {
            return;
        };
        let Some(slot) = self.values.get_mut(base) else {
            return;
        };
        for off in offsets.iter().flatten() {
            let bit = (value >> (off - min_off)) & 1;
            *slot = (*slot & !(1u128 << off)) | (bit << off);
        }
    }

    fn assign(&mut self, target: &Expr, value: &Expr) {
        let w = self.lvalue_width(target);
        let v = self.eval(value, w);
        self.write(target, v);
    }

    fn exec(&mut self, s: &Stmt) {
        match s {
            Stmt::Empty => {}
            Stmt::Block(stmts) => stmts.iter().for_each(|i| self.exec(i)),
            Stmt::Assign { target, value, .. } => self.assign(target, value),
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.eval_self(cond) != 0 {
                    self.exec(then_branch);
                } else if let Some(e) = else_branch {
                    self.exec(e);
                }
            }
            Stmt::Case {
                kind,
                subject,
                items,
            } => {
                let chosen = items.iter().find(|item| {
                    !item.labels.is_empty() && item.labels.iter().any(|l| self.case_match(*kind, subject, l))
                });
                let chosen = chosen.or_else(|| items.iter().find(|i| i.labels.is_empty()));
                if let Some(item) = chosen {
                    self.exec(&item.body);
                }
            }
        }
    }

    fn case_match(&self, kind: CaseKind, subject: &Expr, label: &Expr) -> bool {
        let w = self.self_width(subject).max(self.self_width(label));
        let a = self.eval(subject, w);
        let b = self.eval(label, w);
        let care = match (kind, label) {
            (CaseKind::Casez | CaseKind::Casex, Expr::Literal(l)) => !l.xz_mask,
            _ => u128::MAX,
        };
        (a & care & mask(w)) == (b & care & mask(w))
    }

    /// Settles continuous assignments and `@*` blocks. Block targets restart
    /// from zero on every evaluation, so incomplete assignments do not latch.
    /// Returns false when the network does not settle.
    pub fn settle(&mut self) -> bool {
        let targets: Vec<Vec<&'m str>> = self
            .module
            .always_blocks
            .iter()
            .map(|b| block_targets(&b.body))
            .collect();
        let limit = self.values.len() + 2;
        for _ in 0..limit {
            let before = self.values.clone();
            for a in &self.module.assigns {
                self.assign(&a.target, &a.value);
            }
            for (b, ts) in self.module.always_blocks.iter().zip(&targets) {
                for t in ts {
                    if let Some(v) = self.values.get_mut(t) {
                        *v = 0;
                    }
                }
                self.exec(&b.body);
            }
            if self.values == before {
                return true;
            }
        }
        false
    }
}

fn block_targets(s: &Stmt) -> Vec<&str> {
    let mut out = Vec::new();
    fn walk<'a>(s: &'a Stmt, out: &mut Vec<&'a str>) {
        match s {
            Stmt::Block(v) => v.iter().for_each(|i| walk(i, out)),
            Stmt::Assign { target, .. } => out.extend(target.lvalue_targets()),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                walk(then_branch, out);
                if let Some(e) = else_branch {
                    walk(e, out);
                }
            }
            Stmt::Case { items, .. } => items.iter().for_each(|i| walk(&i.body, out)),
            Stmt::Empty => {}
        }
    }
    walk(s, &mut out);
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn run(src: &str, inputs: &[(&str, u128)]) -> HashMap<String, u128> {
        let m = parse_source(src, "t.v").unwrap().modules.remove(0);
        let mut ev = Evaluator::new(&m);
        for (n, v) in inputs {
            *ev.values.get_mut(n).unwrap() = *v;
        }
        assert!(ev.settle());
        ev.values.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn xor_modulator() {
        let v = run(
            "module m(input [7:0] key, lfsr, output [7:0] load); assign load = key ^ lfsr; endmodule",
            &[("key", 0b1010_1010), ("lfsr", 0b1101_1110)],
        );
        assert_eq!(v["load"], 0b0111_0100);
    }

    #[test]
    fn carry_is_kept_by_context_width() {
        let v = run(
            "module m(input [3:0] a, b, output [4:0] s); assign s = a + b; endmodule",
            &[("a", 15), ("b", 1)],
        );
        assert_eq!(v["s"], 16);
    }

    #[test]
    fn inversion_extends_to_context() {
        let v = run("module m(input [3:0] a, output [7:0] y); assign y = ~a; endmodule", &[("a", 0)]);
        assert_eq!(v["y"], 0xff);
    }

    #[test]
    fn selects_concat_and_replication() {
        let v = run(
            "module m(input [7:0] a, input [1:0] i, output [7:0] y, output [3:0] z, output b);\n\
             assign y = {a[3:0], a[7:4]};\n assign z = {2{a[1:0]}};\n assign b = a[i];\nendmodule",
            &[("a", 0xa5), ("i", 2)],
        );
        assert_eq!(v["y"], 0x5a);
        assert_eq!(v["z"], 0b0101);
        assert_eq!(v["b"], 1);
    }

    #[test]
    fn indexed_part_select() {
        let v = run(
            "module m(input [7:0] a, output [3:0] y, output [3:0] z); assign y = a[4 +: 4]; assign z = a[3 -: 4]; endmodule",
            &[("a", 0xc3)],
        );
        assert_eq!(v["y"], 0xc);
        assert_eq!(v["z"], 0x3);
    }

    #[test]
    fn always_star_with_case_and_default_zero() {
        let src = "module m(input [1:0] s, input secret, output reg [1:0] y, output reg out);\n\
             always @(*) begin\n case (s) 2'b00: y = 2'd1; 2'b1?: y = 2'd2; default: y = 2'd3; endcase\n\
             if (secret) out = 1'b1;\n end\nendmodule";
        casez_check(src);
    }

    fn casez_check(src: &str) {
        let src = src.replace("case (s)", "casez (s)");
        assert_eq!(run(&src, &[("s", 0)])["y"], 1);
        assert_eq!(run(&src, &[("s", 3)])["y"], 2);
        assert_eq!(run(&src, &[("s", 1)])["y"], 3);
        assert_eq!(run(&src, &[("secret", 0)])["out"], 0);
        assert_eq!(run(&src, &[("secret", 1)])["out"], 1);
    }

    #[test]
    fn chained_assigns_settle_out_of_order() {
        let v = run(
            "module m(input a, output y); wire t; assign y = ~t; assign t = a; endmodule",
            &[("a", 1)],
        );
        assert_eq!(v["y"], 0);
    }

    #[test]
    fn concat_target_splits_value() {
        let v = run(
            "module m(input [3:0] a, output [1:0] hi, output [1:0] lo); assign {hi, lo} = a; endmodule",
            &[("a", 0b1001)],
        );
        assert_eq!((v["hi"], v["lo"]), (0b10, 0b01));
    }
}
