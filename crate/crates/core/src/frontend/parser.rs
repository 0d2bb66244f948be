//! Recursive-descent parser for the supported Verilog subset.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::lexer::{Lexer, Token, TokenKind};
use super::{Diagnostic, FrontendError, Severity};

/// Keywords that start module items or statements outside the subset.
const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "initial", "generate", "endgenerate", "genvar", "function", "task", "integer", "real",
    "realtime", "time", "event", "defparam", "specify", "primitive", "supply0", "supply1", "wand",
    "wor", "tri0", "tri1", "trireg", "and", "or", "nand", "nor", "xor", "xnor", "not", "buf",
    "bufif0", "bufif1", "notif0", "notif1", "always_ff", "always_comb", "always_latch", "logic",
    "fork", "for", "while", "repeat", "forever", "disable", "wait", "signed", "automatic",
    "config", "interface", "class", "package",
];

const RESERVED: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "tri", "parameter",
    "localparam", "assign", "always", "begin", "end", "if", "else", "case", "casez", "casex",
    "endcase", "default", "posedge", "negedge", "or", "macromodule",
];

/// Everything produced from one source file.
#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub modules: Vec<ModuleDecl>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_source(text: &str, path: &str) -> Result<ParseOutput, FrontendError> {
    let tokens = Lexer::new(text, path).tokenize()?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        file: path,
        src: text,
        diagnostics: Vec::new(),
    };
    let mut modules: Vec<ModuleDecl> = Vec::new();
    while !parser.at_eof() {
        let m = parser.module()?;
        if modules.iter().any(|prev| prev.name == m.name) {
            return Err(FrontendError::DuplicateModule {
                name: m.name,
                file: path.to_string(),
            });
        }
        modules.push(m);
    }
    // name positional connections whose target lives in the same file
    let port_lists: HashMap<String, Vec<String>> = modules
        .iter()
        .map(|m| (m.name.clone(), m.ports.iter().map(|p| p.name.clone()).collect()))
        .collect();
    for m in &mut modules {
        for (i, inst) in m.instances.iter_mut().enumerate() {
            if let Some(ports) = port_lists.get(&inst.module_name) {
                normalize_positional(inst, ports).map_err(|message| FrontendError::Parse {
                    file: path.to_string(),
                    line: m.spans.instances[i].line,
                    col: m.spans.instances[i].col,
                    message,
                })?;
            }
        }
    }
    Ok(ParseOutput {
        modules,
        diagnostics: parser.diagnostics,
    })
}

/// Converts positional connections to named ones using the target's port order.
pub(crate) fn normalize_positional(inst: &mut Instance, ports: &[String]) -> Result<(), String> {
    if !inst.is_positional() {
        return Ok(());
    }
    if inst.connections.len() > ports.len() {
        return Err(format!(
            "instance `{}` passes {} positional connections but module `{}` has {} ports",
            inst.instance_name,
            inst.connections.len(),
            inst.module_name,
            ports.len()
        ));
    }
    for conn in &mut inst.connections {
        if let PortRef::Positional(i) = conn.port {
            conn.port = PortRef::Named(ports[i].clone());
        }
    }
    Ok(())
}

struct Parser<'a> {
    tokens: Vec<Token>,
    idx: usize,
    file: &'a str,
    src: &'a str,
    diagnostics: Vec<Diagnostic>,
}

/// Per-module parse state.
#[derive(Default)]
struct ModuleState {
    name: String,
    params: Vec<Param>,
    ansi: bool,
    header_names: Vec<String>,
    ports: Vec<Port>,
    nets: Vec<Net>,
    assigns: Vec<ContinuousAssign>,
    always_blocks: Vec<ProcBlock>,
    instances: Vec<Instance>,
    instance_pos: Vec<Pos>,
    uses: Vec<(String, Pos)>,
}

impl ModuleState {
    fn param(&self, name: &str) -> Option<&Literal> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    fn has_name(&self, name: &str) -> bool {
        self.ports.iter().any(|p| p.name == name)
            || self.nets.iter().any(|n| n.name == name)
            || self.param(name).is_some()
    }
}

type PResult<T> = Result<T, FrontendError>;

impl<'a> Parser<'a> {
    // ---- token helpers ----

    fn peek(&self) -> &Token {
        &self.tokens[self.idx]
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.idx].clone();
        if self.idx < self.tokens.len() - 1 {
            self.idx += 1;
        }
        tok
    }

    fn is_symbol(&self, sym: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Symbol(s) if *s == sym)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == kw)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        if self.is_symbol(sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error_at(&self, pos: Pos, message: impl Into<String>) -> FrontendError {
        FrontendError::Parse {
            file: self.file.to_string(),
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }

    fn expected(&self, what: &str) -> FrontendError {
        let tok = self.peek();
        self.error_at(tok.pos, format!("expected {what}, found {}", tok.describe()))
    }

    fn unsupported(&self, pos: Pos, construct: impl Into<String>) -> FrontendError {
        FrontendError::Unsupported {
            file: self.file.to_string(),
            line: pos.line,
            col: pos.col,
            construct: construct.into(),
        }
    }

    fn expect_symbol(&mut self, sym: &str, what: &str) -> PResult<Token> {
        if self.is_symbol(sym) {
            Ok(self.advance())
        } else {
            Err(self.expected(what))
        }
    }

    fn identifier(&mut self, what: &str) -> PResult<(String, Pos)> {
        match &self.peek().kind {
            TokenKind::Ident(name) if !RESERVED.contains(&name.as_str()) => {
                if UNSUPPORTED_KEYWORDS.contains(&name.as_str()) {
                    return Err(self.unsupported(self.peek().pos, format!("`{name}`")));
                }
                let name = name.clone();
                let pos = self.advance().pos;
                Ok((name, pos))
            }
            _ => Err(self.expected(what)),
        }
    }

    // ---- modules ----

    fn module(&mut self) -> PResult<ModuleDecl> {
        let start_tok = self.peek().clone();
        if !(self.eat_keyword("module") || self.eat_keyword("macromodule")) {
            if let TokenKind::Ident(kw) = &start_tok.kind {
                if UNSUPPORTED_KEYWORDS.contains(&kw.as_str()) {
                    return Err(self.unsupported(start_tok.pos, format!("`{kw}`")));
                }
            }
            return Err(self.expected("`module`"));
        }
        let (name, _) = self.identifier("module name")?;
        let mut st = ModuleState {
            name,
            ..Default::default()
        };
        if self.eat_symbol("#") {
            self.parameter_port_list(&mut st)?;
        }
        if self.is_symbol("(") {
            self.port_list(&mut st)?;
        }
        self.expect_symbol(";", "`;` after module header")?;
        let end = loop {
            if self.at_eof() {
                return Err(self.expected(&format!("`endmodule` to close module `{}`", st.name)));
            }
            if self.is_keyword("endmodule") {
                break self.advance().end;
            }
            self.module_item(&mut st)?;
        };
        self.finish_module(st, start_tok, end)
    }

    fn finish_module(&mut self, mut st: ModuleState, start: Token, end: usize) -> PResult<ModuleDecl> {
        if !st.ansi {
            let mut ordered = Vec::with_capacity(st.header_names.len());
            for name in &st.header_names {
                match st.ports.iter().position(|p| &p.name == name) {
                    Some(i) => ordered.push(st.ports[i].clone()),
                    None => {
                        return Err(self.error_at(
                            start.pos,
                            format!("port `{name}` of module `{}` has no direction declaration", st.name),
                        ))
                    }
                }
            }
            st.ports = ordered;
        }
        let mut seen = HashSet::new();
        for (name, pos) in &st.uses {
            let declared = st.ports.iter().any(|p| &p.name == name) || st.nets.iter().any(|n| &n.name == name);
            if !declared && seen.insert(name.clone()) {
                self.diagnostics.push(Diagnostic {
                    file: self.file.to_string(),
                    line: pos.line,
                    col: pos.col,
                    severity: Severity::Warning,
                    message: format!("undeclared identifier `{name}` in module `{}`", st.name),
                });
            }
        }
        Ok(ModuleDecl {
            name: st.name,
            file: self.file.to_string(),
            params: st.params,
            ports: st.ports,
            nets: st.nets,
            assigns: st.assigns,
            always_blocks: st.always_blocks,
            instances: st.instances,
            source_text: self.src[start.start..end].to_string(),
            spans: ModuleSpans {
                module: start.pos,
                instances: st.instance_pos,
            },
        })
    }

    fn parameter_port_list(&mut self, st: &mut ModuleState) -> PResult<()> {
        self.expect_symbol("(", "`(` to open parameter list")?;
        if self.eat_symbol(")") {
            return Ok(());
        }
        loop {
            let local = self.is_keyword("localparam");
            if !(self.eat_keyword("parameter") || self.eat_keyword("localparam")) && st.params.is_empty() {
                return Err(self.expected("`parameter`"));
            }
            self.param_assignment(st, local)?;
            if self.eat_symbol(")") {
                return Ok(());
            }
            if self.at_eof() {
                return Err(self.expected("`,` or `)` to close parameter list"));
            }
            self.expect_symbol(",", "`,` or `)` in parameter list")?;
        }
    }

    fn param_assignment(&mut self, st: &mut ModuleState, local: bool) -> PResult<()> {
        let range = self.opt_range(st)?;
        let (name, pos) = self.identifier("parameter name")?;
        if st.has_name(&name) {
            return Err(self.error_at(pos, format!("`{name}` declared twice")));
        }
        self.expect_symbol("=", "`=` in parameter declaration")?;
        let expr = self.expr(st)?;
        let mut value = match expr {
            Expr::Literal(lit) => lit,
            other => {
                let v = self.const_eval(&other, pos)?;
                if v < 0 {
                    return Err(self.unsupported(pos, "negative parameter value"));
                }
                Literal::unsized_decimal(v as u128)
            }
        };
        if let Some(r) = range {
            let w = r.width();
            if value.width != Some(w) {
                let mask = if w >= 128 { u128::MAX } else { (1u128 << w) - 1 };
                value = Literal {
                    text: format!("{w}'d{}", value.value & mask),
                    width: Some(w),
                    value: value.value & mask,
                    xz_mask: 0,
                };
            }
        }
        st.params.push(Param { name, local, value });
        Ok(())
    }

    fn port_list(&mut self, st: &mut ModuleState) -> PResult<()> {
        let module_name = st.name.clone();
        let unterminated = |p: &Self| {
            let tok = p.peek();
            p.error_at(
                tok.pos,
                format!(
                    "unterminated port list of module `{module_name}`: expected port or `)`, found {}",
                    tok.describe()
                ),
            )
        };
        self.advance(); // (
        if self.eat_symbol(")") {
            return Ok(());
        }
        let ansi = ["input", "output", "inout"].iter().any(|kw| self.is_keyword(kw));
        st.ansi = ansi;
        let mut current: Option<(Direction, NetKind, Option<Range>)> = None;
        loop {
            if self.at_eof() {
                return Err(unterminated(self));
            }
            if ansi {
                if let Some(dir) = self.direction() {
                    let kind = self.net_kind().unwrap_or(NetKind::Wire);
                    let range = self.opt_range(st)?;
                    current = Some((dir, kind, range));
                }
                let (dir, kind, range) = current.expect("ansi list starts with a direction");
                if self.at_eof() {
                    return Err(unterminated(self));
                }
                let (name, pos) = self.identifier("port name")?;
                if st.has_name(&name) {
                    return Err(self.error_at(pos, format!("port `{name}` declared twice")));
                }
                st.ports.push(Port {
                    name,
                    direction: dir,
                    kind,
                    range,
                });
            } else {
                let (name, pos) = self.identifier("port name")?;
                if st.header_names.contains(&name) {
                    return Err(self.error_at(pos, format!("port `{name}` listed twice")));
                }
                st.header_names.push(name);
            }
            if self.eat_symbol(")") {
                return Ok(());
            }
            if self.at_eof() {
                return Err(unterminated(self));
            }
            self.expect_symbol(",", "`,` or `)` in port list")?;
        }
    }

    fn direction(&mut self) -> Option<Direction> {
        let dir = match &self.peek().kind {
            TokenKind::Ident(s) if s == "input" => Direction::Input,
            TokenKind::Ident(s) if s == "output" => Direction::Output,
            TokenKind::Ident(s) if s == "inout" => Direction::Inout,
            _ => return None,
        };
        self.advance();
        Some(dir)
    }

    fn net_kind(&mut self) -> Option<NetKind> {
        if self.eat_keyword("wire") || self.eat_keyword("tri") {
            Some(NetKind::Wire)
        } else if self.eat_keyword("reg") {
            Some(NetKind::Reg)
        } else {
            None
        }
    }

    fn opt_range(&mut self, st: &mut ModuleState) -> PResult<Option<Range>> {
        if self.is_keyword("signed") {
            return Err(self.unsupported(self.peek().pos, "signed declaration"));
        }
        if !self.is_symbol("[") {
            return Ok(None);
        }
        let pos = self.advance().pos;
        let msb = self.expr(st)?;
        self.expect_symbol(":", "`:` in range")?;
        let lsb = self.expr(st)?;
        self.expect_symbol("]", "`]` to close range")?;
        let msb = self.const_eval(&msb, pos)?;
        let lsb = self.const_eval(&lsb, pos)?;
        let range = Range {
            msb: msb as i64,
            lsb: lsb as i64,
        };
        if range.width() > 128 {
            return Err(self.unsupported(pos, format!("vector of width {}", range.width())));
        }
        Ok(Some(range))
    }

    fn const_eval(&self, e: &Expr, pos: Pos) -> PResult<i128> {
        let non_const = || self.unsupported(pos, "non-constant expression where a constant is required");
        Ok(match e {
            Expr::Literal(l) => {
                if l.xz_mask != 0 {
                    return Err(non_const());
                }
                l.value as i128
            }
            Expr::Unary { op: UnaryOp::Neg, operand } => -self.const_eval(operand, pos)?,
            Expr::Unary { op: UnaryOp::Plus, operand } => self.const_eval(operand, pos)?,
            Expr::Binary { op, lhs, rhs } => {
                let a = self.const_eval(lhs, pos)?;
                let b = self.const_eval(rhs, pos)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div if b != 0 => a / b,
                    BinaryOp::Mod if b != 0 => a % b,
                    BinaryOp::Shl if (0..127).contains(&b) => a << b,
                    BinaryOp::Shr if (0..127).contains(&b) => a >> b,
                    _ => return Err(non_const()),
                }
            }
            _ => return Err(non_const()),
        })
    }

    fn module_item(&mut self, st: &mut ModuleState) -> PResult<()> {
        let tok = self.peek().clone();
        let kw = match &tok.kind {
            TokenKind::Ident(s) => s.clone(),
            TokenKind::Symbol(";") => {
                self.advance();
                return Ok(());
            }
            _ => return Err(self.expected("module item")),
        };
        match kw.as_str() {
            "input" | "output" | "inout" => self.port_declaration(st),
            "wire" | "reg" | "tri" => self.net_declaration(st),
            "parameter" | "localparam" => {
                self.advance();
                let local = kw == "localparam";
                loop {
                    self.param_assignment(st, local)?;
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                self.expect_symbol(";", "`;` after parameter declaration")?;
                Ok(())
            }
            "assign" => {
                self.advance();
                if self.is_symbol("#") {
                    return Err(self.unsupported(self.peek().pos, "delay control"));
                }
                loop {
                    let target = self.lvalue(st)?;
                    self.expect_symbol("=", "`=` in continuous assignment")?;
                    let value = self.expr(st)?;
                    st.assigns.push(ContinuousAssign { target, value });
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                self.expect_symbol(";", "`;` after continuous assignment")?;
                Ok(())
            }
            "always" => self.always(st),
            k if UNSUPPORTED_KEYWORDS.contains(&k) => Err(self.unsupported(tok.pos, format!("`{k}`"))),
            k if RESERVED.contains(&k) => Err(self.expected("module item")),
            _ => self.instantiation(st),
        }
    }

    fn port_declaration(&mut self, st: &mut ModuleState) -> PResult<()> {
        let dir_pos = self.peek().pos;
        let dir = self.direction().expect("checked by caller");
        if st.ansi {
            return Err(self.error_at(dir_pos, "port direction redeclared in a module with an ANSI header"));
        }
        let kind = self.net_kind().unwrap_or(NetKind::Wire);
        let range = self.opt_range(st)?;
        loop {
            let (name, pos) = self.identifier("port name")?;
            if !st.header_names.contains(&name) {
                return Err(self.error_at(pos, format!("`{name}` is not in the port list of module `{}`", st.name)));
            }
            if st.ports.iter().any(|p| p.name == name) {
                return Err(self.error_at(pos, format!("port `{name}` declared twice")));
            }
            if let Some(i) = st.nets.iter().position(|n| n.name == name) {
                // `reg q; output q;` order: fold the earlier net into the port
                let net = st.nets.remove(i);
                st.ports.push(Port {
                    name,
                    direction: dir,
                    kind: if kind == NetKind::Reg { kind } else { net.kind },
                    range: range.or(net.range),
                });
            } else {
                st.ports.push(Port {
                    name,
                    direction: dir,
                    kind,
                    range,
                });
            }
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(";", "`;` after port declaration")?;
        Ok(())
    }

    fn net_declaration(&mut self, st: &mut ModuleState) -> PResult<()> {
        let kind = self.net_kind().expect("checked by caller");
        let range = self.opt_range(st)?;
        loop {
            let (name, pos) = self.identifier("net name")?;
            if self.is_symbol("[") {
                return Err(self.unsupported(self.peek().pos, "memory array"));
            }
            if let Some(port) = st.ports.iter_mut().find(|p| p.name == name) {
                if st.ansi {
                    return Err(self.error_at(pos, format!("port `{name}` redeclared as a net")));
                }
                if kind == NetKind::Reg {
                    port.kind = NetKind::Reg;
                }
                match (port.range, range) {
                    (None, r) => port.range = r,
                    (Some(a), Some(b)) if a != b => {
                        return Err(self.error_at(pos, format!("conflicting ranges for `{name}`")))
                    }
                    _ => {}
                }
            } else if st.has_name(&name) {
                return Err(self.error_at(pos, format!("`{name}` declared twice")));
            } else {
                // a non-ANSI port declared as a net first is folded in by its direction declaration
                st.nets.push(Net { name: name.clone(), kind, range });
            }
            if self.is_symbol("=") {
                let eq = self.advance();
                if kind == NetKind::Reg {
                    return Err(self.unsupported(eq.pos, "variable initializer"));
                }
                let value = self.expr(st)?;
                st.assigns.push(ContinuousAssign {
                    target: Expr::Ident(name),
                    value,
                });
            }
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(";", "`;` after net declaration")?;
        Ok(())
    }

    fn always(&mut self, st: &mut ModuleState) -> PResult<()> {
        let always = self.advance();
        if !self.eat_symbol("@") {
            return Err(self.unsupported(always.pos, "`always` without event control"));
        }
        let sensitivity = if self.eat_symbol("*") {
            Sensitivity::Star
        } else {
            self.expect_symbol("(", "`(` or `*` after `@`")?;
            if self.eat_symbol("*") {
                self.expect_symbol(")", "`)` after `@(*`")?;
                Sensitivity::Star
            } else {
                let mut events = Vec::new();
                loop {
                    let edge = if self.eat_keyword("posedge") {
                        Some(Edge::Posedge)
                    } else if self.eat_keyword("negedge") {
                        Some(Edge::Negedge)
                    } else {
                        None
                    };
                    let (signal, pos) = self.identifier("signal in event list")?;
                    st.uses.push((signal.clone(), pos));
                    events.push(Event { edge, signal });
                    if self.eat_keyword("or") || self.eat_symbol(",") {
                        continue;
                    }
                    break;
                }
                self.expect_symbol(")", "`)` to close event list")?;
                Sensitivity::Events(events)
            }
        };
        let body = self.statement(st)?;
        st.always_blocks.push(ProcBlock { sensitivity, body });
        Ok(())
    }

    fn instantiation(&mut self, st: &mut ModuleState) -> PResult<()> {
        let (module_name, _) = self.identifier("module item")?;
        if self.is_symbol("#") {
            return Err(self.unsupported(self.peek().pos, "parameter override on instance"));
        }
        loop {
            let (instance_name, pos) = self.identifier("instance name")?;
            if self.is_symbol("[") {
                return Err(self.unsupported(self.peek().pos, "instance array"));
            }
            if st.instances.iter().any(|i| i.instance_name == instance_name) || st.has_name(&instance_name) {
                return Err(self.error_at(pos, format!("`{instance_name}` declared twice")));
            }
            self.expect_symbol("(", "`(` to open instance connections")?;
            let connections = self.connections(st, &instance_name)?;
            st.instances.push(Instance {
                instance_name,
                module_name: module_name.clone(),
                connections,
            });
            st.instance_pos.push(pos);
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.expect_symbol(";", "`;` after instance")?;
        Ok(())
    }

    fn connections(&mut self, st: &mut ModuleState, instance: &str) -> PResult<Vec<Connection>> {
        let mut out = Vec::new();
        if self.eat_symbol(")") {
            return Ok(out);
        }
        let named = self.is_symbol(".");
        loop {
            if self.at_eof() {
                return Err(self.expected(&format!("`)` to close connections of instance `{instance}`")));
            }
            if named {
                self.expect_symbol(".", "`.` before named port connection")?;
                if self.is_symbol("*") {
                    return Err(self.unsupported(self.peek().pos, "wildcard port connection `.*`"));
                }
                let (formal, pos) = self.identifier("port name")?;
                let dup = out
                    .iter()
                    .any(|c: &Connection| matches!(&c.port, PortRef::Named(n) if *n == formal));
                if dup {
                    return Err(self.error_at(
                        pos,
                        format!("port `{formal}` connected twice on instance `{instance}`"),
                    ));
                }
                self.expect_symbol("(", "`(` after port name")?;
                let actual = if self.is_symbol(")") { None } else { Some(self.expr(st)?) };
                self.expect_symbol(")", "`)` after port connection")?;
                out.push(Connection {
                    port: PortRef::Named(formal),
                    actual,
                });
            } else {
                let actual = if self.is_symbol(",") || self.is_symbol(")") {
                    None
                } else {
                    Some(self.expr(st)?)
                };
                out.push(Connection {
                    port: PortRef::Positional(out.len()),
                    actual,
                });
            }
            if self.eat_symbol(")") {
                return Ok(out);
            }
            self.expect_symbol(",", "`,` or `)` in instance connections")?;
        }
    }

    // ---- statements ----

    fn statement(&mut self, st: &mut ModuleState) -> PResult<Stmt> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Symbol(";") => {
                self.advance();
                Ok(Stmt::Empty)
            }
            TokenKind::Symbol("#") => Err(self.unsupported(tok.pos, "delay control")),
            TokenKind::Symbol("@") => Err(self.unsupported(tok.pos, "event control inside a procedural block")),
            TokenKind::Ident(kw) => match kw.as_str() {
                "begin" => {
                    self.advance();
                    if self.eat_symbol(":") {
                        self.identifier("block name")?;
                    }
                    let mut stmts = Vec::new();
                    while !self.eat_keyword("end") {
                        if self.at_eof() {
                            return Err(self.expected("`end` to close `begin`"));
                        }
                        stmts.push(self.statement(st)?);
                    }
                    Ok(Stmt::Block(stmts))
                }
                "if" => {
                    self.advance();
                    self.expect_symbol("(", "`(` after `if`")?;
                    let cond = self.expr(st)?;
                    self.expect_symbol(")", "`)` after `if` condition")?;
                    let then_branch = Box::new(self.statement(st)?);
                    let else_branch = if self.eat_keyword("else") {
                        Some(Box::new(self.statement(st)?))
                    } else {
                        None
                    };
                    Ok(Stmt::If {
                        cond,
                        then_branch,
                        else_branch,
                    })
                }
                "case" | "casez" | "casex" => {
                    let kind = match kw.as_str() {
                        "case" => CaseKind::Case,
                        "casez" => CaseKind::Casez,
                        _ => CaseKind::Casex,
                    };
                    self.advance();
                    self.expect_symbol("(", "`(` after `case`")?;
                    let subject = self.expr(st)?;
                    self.expect_symbol(")", "`)` after case subject")?;
                    let mut items = Vec::new();
                    while !self.eat_keyword("endcase") {
                        if self.at_eof() {
                            return Err(self.expected("`endcase`"));
                        }
                        let labels = if self.eat_keyword("default") {
                            self.eat_symbol(":");
                            Vec::new()
                        } else {
                            let mut labels = vec![self.expr(st)?];
                            while self.eat_symbol(",") {
                                labels.push(self.expr(st)?);
                            }
                            self.expect_symbol(":", "`:` after case label")?;
                            labels
                        };
                        let body = self.statement(st)?;
                        items.push(CaseItem { labels, body });
                    }
                    Ok(Stmt::Case { kind, subject, items })
                }
                k if UNSUPPORTED_KEYWORDS.contains(&k) => Err(self.unsupported(tok.pos, format!("`{k}`"))),
                _ => {
                    let target = self.lvalue(st)?;
                    let blocking = if self.eat_symbol("=") {
                        true
                    } else if self.eat_symbol("<=") {
                        false
                    } else {
                        return Err(self.expected("`=` or `<=` in procedural assignment"));
                    };
                    if self.is_symbol("#") {
                        return Err(self.unsupported(self.peek().pos, "intra-assignment delay"));
                    }
                    let value = self.expr(st)?;
                    self.expect_symbol(";", "`;` after assignment")?;
                    Ok(Stmt::Assign {
                        target,
                        value,
                        blocking,
                    })
                }
            },
            _ => Err(self.expected("statement")),
        }
    }

    fn lvalue(&mut self, st: &mut ModuleState) -> PResult<Expr> {
        let pos = self.peek().pos;
        let e = if self.is_symbol("{") {
            self.advance();
            let mut items = vec![self.lvalue(st)?];
            while self.eat_symbol(",") {
                items.push(self.lvalue(st)?);
            }
            self.expect_symbol("}", "`}` to close concatenation")?;
            Expr::Concat(items)
        } else {
            let (name, npos) = self.identifier("assignment target")?;
            if st.param(&name).is_some() {
                return Err(self.error_at(npos, format!("cannot assign to parameter `{name}`")));
            }
            st.uses.push((name.clone(), npos));
            self.select(st, name)?
        };
        if !e.is_lvalue() {
            return Err(self.error_at(pos, "invalid assignment target"));
        }
        Ok(e)
    }

    // ---- expressions ----

    fn expr(&mut self, st: &mut ModuleState) -> PResult<Expr> {
        let cond = self.binary(st, 1)?;
        if self.eat_symbol("?") {
            let then_expr = self.expr(st)?;
            self.expect_symbol(":", "`:` in conditional expression")?;
            let else_expr = self.expr(st)?;
            return Ok(Expr::Ternary {
                cond: Box::new(cond),
                then_expr: Box::new(then_expr),
                else_expr: Box::new(else_expr),
            });
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let TokenKind::Symbol(s) = self.peek().kind else {
            return None;
        };
        Some(match s {
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Mod,
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            "<<<" => BinaryOp::AShl,
            ">>>" => BinaryOp::AShr,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "===" => BinaryOp::CaseEq,
            "!==" => BinaryOp::CaseNe,
            "&" => BinaryOp::BitAnd,
            "^" => BinaryOp::BitXor,
            "~^" | "^~" => BinaryOp::BitXnor,
            "|" => BinaryOp::BitOr,
            "&&" => BinaryOp::LogicAnd,
            "||" => BinaryOp::LogicOr,
            _ => return None,
        })
    }

    fn binary(&mut self, st: &mut ModuleState, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary(st)?;
        loop {
            if self.is_symbol("**") {
                return Err(self.unsupported(self.peek().pos, "power operator `**`"));
            }
            let Some(op) = self.binary_op() else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(st, prec + 1)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self, st: &mut ModuleState) -> PResult<Expr> {
        let op = match self.peek().kind {
            TokenKind::Symbol("~") => Some(UnaryOp::BitNot),
            TokenKind::Symbol("!") => Some(UnaryOp::LogicNot),
            TokenKind::Symbol("-") => Some(UnaryOp::Neg),
            TokenKind::Symbol("+") => Some(UnaryOp::Plus),
            TokenKind::Symbol("&") => Some(UnaryOp::ReduceAnd),
            TokenKind::Symbol("|") => Some(UnaryOp::ReduceOr),
            TokenKind::Symbol("^") => Some(UnaryOp::ReduceXor),
            TokenKind::Symbol("~&") => Some(UnaryOp::ReduceNand),
            TokenKind::Symbol("~|") => Some(UnaryOp::ReduceNor),
            TokenKind::Symbol("~^") | TokenKind::Symbol("^~") => Some(UnaryOp::ReduceXnor),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.unary(st)?;
            return Ok(Expr::Unary {
                op,
                operand: Box::new(operand),
            });
        }
        self.primary(st)
    }

    fn primary(&mut self, st: &mut ModuleState) -> PResult<Expr> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number(lit) => {
                self.advance();
                Ok(Expr::Literal(lit))
            }
            TokenKind::Symbol("(") => {
                self.advance();
                let e = self.expr(st)?;
                self.expect_symbol(")", "`)` to close parenthesized expression")?;
                Ok(e)
            }
            TokenKind::Symbol("{") => {
                self.advance();
                let first = self.expr(st)?;
                if self.eat_symbol("{") {
                    let count_val = self.const_eval(&first, tok.pos)?;
                    if count_val <= 0 {
                        return Err(self.unsupported(tok.pos, "non-positive replication count"));
                    }
                    let mut items = vec![self.expr(st)?];
                    while self.eat_symbol(",") {
                        items.push(self.expr(st)?);
                    }
                    self.expect_symbol("}", "`}` to close replicated items")?;
                    self.expect_symbol("}", "`}` to close replication")?;
                    let count = match first {
                        Expr::Literal(l) => l,
                        _ => Literal::unsized_decimal(count_val as u128),
                    };
                    return Ok(Expr::Replicate {
                        count: Box::new(Expr::Literal(count)),
                        items,
                    });
                }
                let mut items = vec![first];
                while self.eat_symbol(",") {
                    items.push(self.expr(st)?);
                }
                self.expect_symbol("}", "`}` to close concatenation")?;
                Ok(Expr::Concat(items))
            }
            TokenKind::Ident(_) => {
                let (name, pos) = self.identifier("expression")?;
                if self.is_symbol("(") {
                    return Err(self.unsupported(pos, format!("function call `{name}(...)`")));
                }
                if self.is_symbol(".") {
                    return Err(self.unsupported(pos, "hierarchical reference"));
                }
                if let Some(lit) = st.param(&name) {
                    if self.is_symbol("[") {
                        return Err(self.unsupported(pos, "select on a parameter"));
                    }
                    return Ok(Expr::Literal(lit.clone()));
                }
                st.uses.push((name.clone(), pos));
                self.select(st, name)
            }
            _ => Err(self.expected("expression")),
        }
    }

    /// Optional bit, part or indexed part select after an identifier.
    fn select(&mut self, st: &mut ModuleState, base: String) -> PResult<Expr> {
        if !self.is_symbol("[") {
            return Ok(Expr::Ident(base));
        }
        let pos = self.advance().pos;
        let first = self.expr(st)?;
        let e = if self.eat_symbol(":") {
            let second = self.expr(st)?;
            Expr::Slice {
                base,
                msb: self.const_eval(&first, pos)? as i64,
                lsb: self.const_eval(&second, pos)? as i64,
            }
        } else if self.is_symbol("+:") || self.is_symbol("-:") {
            let ascending = self.advance().kind == TokenKind::Symbol("+:");
            let w = self.expr(st)?;
            let width = self.const_eval(&w, pos)?;
            if !(1..=128).contains(&width) {
                return Err(self.unsupported(pos, "indexed part-select width"));
            }
            Expr::IndexedSlice {
                base,
                start: Box::new(first),
                width: width as u32,
                ascending,
            }
        } else {
            Expr::Index {
                base,
                index: Box::new(first),
            }
        };
        self.expect_symbol("]", "`]` to close select")?;
        if self.is_symbol("[") {
            return Err(self.unsupported(self.peek().pos, "multi-dimensional select"));
        }
        Ok(e)
    }
}
