//! Random combinational modules for soundness checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Sig {
    name: String,
    width: u32,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn expr(rng: &mut ChaCha8Rng, avail: &[Sig], depth: u32) -> String {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        if rng.random_bool(0.15) {
            return format!("{}'d{}", rng.random_range(1..=4), rng.random_range(0..4));
        }
        let s = pick(rng, avail);
        return match rng.random_range(0..6) {
            0 if s.width > 1 => format!("{}[{}]", s.name, rng.random_range(0..s.width)),
            1 if s.width > 1 => {
                let lsb = rng.random_range(0..s.width - 1);
                format!("{}[{}:{lsb}]", s.name, rng.random_range(lsb + 1..s.width))
            }
            _ => s.name.clone(),
        };
    }
    let sub = |rng: &mut ChaCha8Rng| expr(rng, avail, depth - 1);
    match rng.random_range(0..10) {
        0 => {
            let op = *pick(rng, &["~", "!", "&", "|", "^", "-"]);
            format!("{op}({})", sub(rng))
        }
        1 => format!("({}) ? ({}) : ({})", sub(rng), sub(rng), sub(rng)),
        2 => format!("{{{}, {}}}", sub(rng), sub(rng)),
        3 => {
            let s = pick(rng, avail);
            format!("({}) >> {}", sub(rng), s.name)
        }
        _ => {
            let op = *pick(rng, &["&", "|", "^", "+", "-", "*", "==", "!=", "<", "&&", "||", "^~"]);
            format!("({}) {op} ({})", sub(rng), sub(rng))
        }
    }
}

/// One module `rnd` with at most 10 input bits and a mix of continuous and
/// `always @(*)` assignments.
pub fn random_module(rng: &mut ChaCha8Rng) -> String {
    let mut avail = Vec::new();
    let mut ports = Vec::new();
    let mut budget = 10u32;
    let n_in = rng.random_range(1..=4);
    for i in 0..n_in {
        if budget == 0 {
            break;
        }
        let w = rng.random_range(1..=budget.min(4));
        budget -= w;
        ports.push(format!("input {}i{i}", range(w)));
        avail.push(Sig { name: format!("i{i}"), width: w });
    }
    let mut body = Vec::new();
    let n_nodes = rng.random_range(1..=5);
    for k in 0..n_nodes {
        let w = rng.random_range(1..=4);
        let is_out = k == n_nodes - 1 || rng.random_bool(0.4);
        let name = if is_out { format!("o{k}") } else { format!("w{k}") };
        let procedural = rng.random_bool(0.35);
        let kind = if procedural { "reg " } else { "" };
        if is_out {
            ports.push(format!("output {kind}{}{name}", range(w)));
        } else {
            body.push(format!("  {} {}{name};", if procedural { "reg" } else { "wire" }, range(w)));
        }
        if procedural {
            let cond = expr(rng, &avail, 2);
            let a = expr(rng, &avail, 2);
            let b = expr(rng, &avail, 2);
            let stmt = match rng.random_range(0..3) {
                0 => format!("if ({cond}) {name} = {a};"),
                1 => format!("if ({cond}) {name} = {a}; else {name} = {b};"),
                _ => format!("case ({cond}) 1'b0: {name} = {a}; default: {name} = {b}; endcase"),
            };
            body.push(format!("  always @(*) begin {name} = 0; {stmt} end"));
        } else {
            body.push(format!("  assign {name} = {};", expr(rng, &avail, 3)));
        }
        avail.push(Sig { name, width: w });
    }
    format!("module rnd({});\n{}\nendmodule\n", ports.join(", "), body.join("\n"))
}

fn range(w: u32) -> String {
    if w == 1 {
        String::new()
    } else {
        format!("[{}:0] ", w - 1)
    }
}
