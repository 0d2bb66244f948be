//! Syntax tree for the supported Verilog-2001 subset.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Wire,
    Reg,
}

/// A constant `[msb:lsb]` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Range {
    pub msb: i64,
    pub lsb: i64,
}

impl Range {
    pub fn width(&self) -> u32 {
        ((self.msb - self.lsb).unsigned_abs() + 1) as u32
    }

    /// Bit offset of a declared index inside the vector, if in bounds.
    pub fn offset_of(&self, index: i64) -> Option<u32> {
        let (lo, hi) = if self.msb >= self.lsb {
            (self.lsb, self.msb)
        } else {
            (self.msb, self.lsb)
        };
        if index < lo || index > hi {
            return None;
        }
        Some(if self.msb >= self.lsb {
            (index - self.lsb) as u32
        } else {
            (self.lsb - index) as u32
        })
    }
}

fn range_width(range: &Option<Range>) -> u32 {
    range.as_ref().map_or(1, Range::width)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub kind: NetKind,
    pub range: Option<Range>,
}

impl Port {
    pub fn width(&self) -> u32 {
        range_width(&self.range)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Net {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<Range>,
}

impl Net {
    pub fn width(&self) -> u32 {
        range_width(&self.range)
    }
}

/// A `parameter` or `localparam` after constant folding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Param {
    pub name: String,
    pub local: bool,
    pub value: Literal,
}

/// A numeric literal. `text` is the source spelling; `xz_mask` marks bits
/// written as `x`, `z` or `?`, which evaluate as zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Literal {
    pub text: String,
    pub width: Option<u32>,
    pub value: u128,
    pub xz_mask: u128,
}

impl Literal {
    pub fn unsized_decimal(value: u128) -> Self {
        Literal {
            text: value.to_string(),
            width: None,
            value,
            xz_mask: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryOp {
    /// `~`
    BitNot,
    /// `!`
    LogicNot,
    Neg,
    Plus,
    ReduceAnd,
    ReduceOr,
    ReduceXor,
    ReduceNand,
    ReduceNor,
    ReduceXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::BitNot => "~",
            UnaryOp::LogicNot => "!",
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::ReduceAnd => "&",
            UnaryOp::ReduceOr => "|",
            UnaryOp::ReduceXor => "^",
            UnaryOp::ReduceNand => "~&",
            UnaryOp::ReduceNor => "~|",
            UnaryOp::ReduceXnor => "~^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BinaryOp {
    Mul,
    Div,
    Mod,
    Add,
    Sub,
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
    BitAnd,
    BitXor,
    BitXnor,
    BitOr,
    LogicAnd,
    LogicOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
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
            BinaryOp::BitAnd => "&",
            BinaryOp::BitXor => "^",
            BinaryOp::BitXnor => "~^",
            BinaryOp::BitOr => "|",
            BinaryOp::LogicAnd => "&&",
            BinaryOp::LogicOr => "||",
        }
    }

    /// Binding strength; higher binds tighter. Unary operators sit above 10.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 10,
            BinaryOp::Add | BinaryOp::Sub => 9,
            BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr => 8,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 7,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::CaseEq | BinaryOp::CaseNe => 6,
            BinaryOp::BitAnd => 5,
            BinaryOp::BitXor | BinaryOp::BitXnor => 4,
            BinaryOp::BitOr => 3,
            BinaryOp::LogicAnd => 2,
            BinaryOp::LogicOr => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Expr {
    Ident(String),
    Literal(Literal),
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
    },
    Concat(Vec<Expr>),
    Replicate {
        count: Box<Expr>,
        items: Vec<Expr>,
    },
    /// `base[index]`
    Index {
        base: String,
        index: Box<Expr>,
    },
    /// `base[msb:lsb]` with constant bounds.
    Slice {
        base: String,
        msb: i64,
        lsb: i64,
    },
    /// `base[start +: width]` or `base[start -: width]`.
    IndexedSlice {
        base: String,
        start: Box<Expr>,
        width: u32,
        ascending: bool,
    },
}

impl Expr {
    /// Identifiers read by this expression, in first-occurrence order.
    pub fn signals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_signals(&mut out);
        let mut seen = std::collections::HashSet::new();
        out.retain(|s| seen.insert(*s));
        out
    }

    fn collect_signals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Ident(name) => out.push(name),
            Expr::Literal(_) => {}
            Expr::Unary { operand, .. } => operand.collect_signals(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_signals(out);
                rhs.collect_signals(out);
            }
            Expr::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                cond.collect_signals(out);
                then_expr.collect_signals(out);
                else_expr.collect_signals(out);
            }
            Expr::Concat(items) => items.iter().for_each(|e| e.collect_signals(out)),
            Expr::Replicate { count, items } => {
                count.collect_signals(out);
                items.iter().for_each(|e| e.collect_signals(out));
            }
            Expr::Index { base, index } => {
                out.push(base);
                index.collect_signals(out);
            }
            Expr::Slice { base, .. } => out.push(base),
            Expr::IndexedSlice { base, start, .. } => {
                out.push(base);
                start.collect_signals(out);
            }
        }
    }

    /// For an assignment target: the signals written.
    pub fn lvalue_targets(&self) -> Vec<&str> {
        match self {
            Expr::Ident(name)
            | Expr::Index { base: name, .. }
            | Expr::Slice { base: name, .. }
            | Expr::IndexedSlice { base: name, .. } => vec![name],
            Expr::Concat(items) => items.iter().flat_map(Expr::lvalue_targets).collect(),
            _ => Vec::new(),
        }
    }

    /// For an assignment target: signals read to select the written bits.
    pub fn lvalue_selectors(&self) -> Vec<&str> {
        match self {
            Expr::Index { index, .. } => index.signals(),
            Expr::IndexedSlice { start, .. } => start.signals(),
            Expr::Concat(items) => items.iter().flat_map(Expr::lvalue_selectors).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_lvalue(&self) -> bool {
        match self {
            Expr::Ident(_) | Expr::Index { .. } | Expr::Slice { .. } | Expr::IndexedSlice { .. } => {
                true
            }
            Expr::Concat(items) => !items.is_empty() && items.iter().all(Expr::is_lvalue),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseItem {
    /// Empty for the `default` arm.
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Stmt {
    Block(Vec<Stmt>),
    Assign {
        target: Expr,
        value: Expr,
        blocking: bool,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    Case {
        kind: CaseKind,
        subject: Expr,
        items: Vec<CaseItem>,
    },
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub edge: Option<Edge>,
    pub signal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Sensitivity {
    /// `@*` or `@(*)`
    Star,
    Events(Vec<Event>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcBlock {
    pub sensitivity: Sensitivity,
    pub body: Stmt,
}

impl ProcBlock {
    /// Edge-triggered blocks hold state across evaluations.
    pub fn is_sequential(&self) -> bool {
        match &self.sensitivity {
            Sensitivity::Star => false,
            Sensitivity::Events(events) => events.iter().any(|e| e.edge.is_some()),
        }
    }

    pub fn event_signals(&self) -> Vec<&str> {
        match &self.sensitivity {
            Sensitivity::Star => Vec::new(),
            Sensitivity::Events(events) => events.iter().map(|e| e.signal.as_str()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContinuousAssign {
    pub target: Expr,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum PortRef {
    Named(String),
    /// Kept only when the target module is not available to name it.
    Positional(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Connection {
    pub port: PortRef,
    /// `None` for an explicitly unconnected port, `.p()`.
    pub actual: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Instance {
    pub instance_name: String,
    pub module_name: String,
    pub connections: Vec<Connection>,
}

impl Instance {
    pub fn is_positional(&self) -> bool {
        self.connections
            .iter()
            .any(|c| matches!(c.port, PortRef::Positional(_)))
    }

    pub fn connection(&self, formal: &str) -> Option<&Connection> {
        self.connections
            .iter()
            .find(|c| matches!(&c.port, PortRef::Named(n) if n == formal))
    }
}

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ModuleSpans {
    pub module: Pos,
    pub instances: Vec<Pos>,
}

/// A parsed module. Equality is structural: `file`, `source_text` and
/// source positions are ignored.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleDecl {
    pub name: String,
    #[serde(skip)]
    pub file: String,
    pub params: Vec<Param>,
    pub ports: Vec<Port>,
    pub nets: Vec<Net>,
    pub assigns: Vec<ContinuousAssign>,
    pub always_blocks: Vec<ProcBlock>,
    pub instances: Vec<Instance>,
    /// Verbatim text from `module` through `endmodule`.
    #[serde(skip)]
    pub source_text: String,
    #[serde(skip)]
    pub(crate) spans: ModuleSpans,
}

impl PartialEq for ModuleDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.ports == other.ports
            && self.nets == other.nets
            && self.assigns == other.assigns
            && self.always_blocks == other.always_blocks
            && self.instances == other.instances
    }
}

impl Eq for ModuleDecl {}

impl ModuleDecl {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&Net> {
        self.nets.iter().find(|n| n.name == name)
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.port(name).is_some() || self.net(name).is_some()
    }

    /// Declared width and range of a port or net.
    pub fn signal_range(&self, name: &str) -> Option<Option<Range>> {
        self.port(name)
            .map(|p| p.range)
            .or_else(|| self.net(name).map(|n| n.range))
    }

    pub fn signal_width(&self, name: &str) -> Option<u32> {
        self.signal_range(name).map(|r| range_width(&r))
    }

    /// All declared signals: ports first, then nets, in declaration order.
    pub fn signal_names(&self) -> impl Iterator<Item = &str> {
        self.ports
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.nets.iter().map(|n| n.name.as_str()))
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    pub fn instance(&self, name: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_name == name)
    }

    pub fn position(&self) -> Pos {
        self.spans.module
    }

    pub fn instance_position(&self, index: usize) -> Pos {
        self.spans.instances.get(index).copied().unwrap_or_default()
    }

    /// Signal names case-insensitively equal to `name`, used to recover
    /// from case mismatches in user or model supplied names.
    pub fn resolve_signal(&self, name: &str) -> Option<&str> {
        if let Some(found) = self.signal_names().find(|s| *s == name) {
            return Some(found);
        }
        let mut hits = self
            .signal_names()
            .filter(|s| s.eq_ignore_ascii_case(name));
        match (hits.next(), hits.next()) {
            (Some(only), None) => Some(only),
            _ => None,
        }
    }
}
