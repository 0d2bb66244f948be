use super::ast::{Literal, Pos};
use super::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    Number(Literal),
    /// Operators and punctuation, longest match.
    Symbol(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Number(l) => format!("number `{}`", l.text),
            TokenKind::Symbol(s) => format!("`{s}`"),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "**", "&&", "||", "==", "!=", "<=", ">=", "<<", ">>", "~&", "~|",
    "~^", "^~", "+:", "-:", "(*", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">",
    "=", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}", "#", "@",
];

/// Compiler directives that carry no meaning for the analysis.
const SKIPPED_DIRECTIVES: &[&str] = &[
    "timescale",
    "default_nettype",
    "resetall",
    "celldefine",
    "endcelldefine",
];

pub(crate) struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    file: &'a str,
    offset: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str, file: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            file,
            offset: 0,
            line: 1,
            col: 1,
        }
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, FrontendError> {
        let mut tokens = Vec::new();
        loop {
            self.skip_trivia()?;
            let start = self.offset;
            let pos = self.pos();
            let Some(&c) = self.bytes.get(self.offset) else {
                tokens.push(Token {
                    kind: TokenKind::Eof,
                    pos,
                    start,
                    end: start,
                });
                return Ok(tokens);
            };
            let kind = if c.is_ascii_alphabetic() || c == b'_' {
                TokenKind::Ident(self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$'))
            } else if c == b'\\' {
                // escaped identifier runs to whitespace
                self.bump();
                TokenKind::Ident(self.take_while(|b| !b.is_ascii_whitespace()))
            } else if c.is_ascii_digit() || c == b'\'' {
                TokenKind::Number(self.number(pos)?)
            } else if c == b'$' {
                let name = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$');
                return Err(self.unsupported(pos, format!("system task or function `{name}`")));
            } else if c == b'"' {
                return Err(self.unsupported(pos, "string literal"));
            } else if c == b'`' {
                self.bump();
                let name = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
                if SKIPPED_DIRECTIVES.contains(&name.as_str()) {
                    self.take_while(|b| b != b'\n');
                    continue;
                }
                return Err(self.unsupported(pos, format!("compiler directive `{name}`")));
            } else {
                let rest = &self.src[self.offset..];
                let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(self.error(pos, format!("unexpected character `{ch}`")));
                };
                for _ in 0..sym.len() {
                    self.bump();
                }
                if *sym == "(*" {
                    // `@(*)` is an event control, not an attribute
                    let after_at = matches!(
                        tokens.last(),
                        Some(Token { kind: TokenKind::Symbol("@"), .. })
                    );
                    if after_at {
                        tokens.push(Token {
                            kind: TokenKind::Symbol("("),
                            pos,
                            start,
                            end: start + 1,
                        });
                        tokens.push(Token {
                            kind: TokenKind::Symbol("*"),
                            pos: Pos {
                                line: pos.line,
                                col: pos.col + 1,
                            },
                            start: start + 1,
                            end: self.offset,
                        });
                        continue;
                    }
                    self.skip_attribute(pos)?;
                    continue;
                }
                TokenKind::Symbol(sym)
            };
            tokens.push(Token {
                kind,
                pos,
                start,
                end: self.offset,
            });
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) {
        if let Some(ch) = self.src[self.offset..].chars().next() {
            self.offset += ch.len_utf8();
            if ch == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
    }

    fn peek_at(&self, n: usize) -> Option<u8> {
        self.bytes.get(self.offset + n).copied()
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> String {
        let start = self.offset;
        while self.peek_at(0).is_some_and(&pred) {
            self.bump();
        }
        self.src[start..self.offset].to_string()
    }

    fn skip_trivia(&mut self) -> Result<(), FrontendError> {
        loop {
            match (self.peek_at(0), self.peek_at(1)) {
                (Some(b), _) if b.is_ascii_whitespace() => self.bump(),
                (Some(b'/'), Some(b'/')) => {
                    self.take_while(|b| b != b'\n');
                }
                (Some(b'/'), Some(b'*')) => {
                    let pos = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek_at(0), self.peek_at(1)) {
                            (Some(b'*'), Some(b'/')) => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => self.bump(),
                            (None, _) => return Err(self.error(pos, "unterminated block comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn skip_attribute(&mut self, pos: Pos) -> Result<(), FrontendError> {
        loop {
            match (self.peek_at(0), self.peek_at(1)) {
                (Some(b'*'), Some(b')')) => {
                    self.bump();
                    self.bump();
                    return Ok(());
                }
                (Some(_), _) => self.bump(),
                (None, _) => return Err(self.error(pos, "unterminated attribute `(*`")),
            }
        }
    }

    fn number(&mut self, pos: Pos) -> Result<Literal, FrontendError> {
        let start = self.offset;
        let size = if self.peek_at(0) == Some(b'\'') {
            None
        } else {
            let digits = self.take_while(|b| b.is_ascii_digit() || b == b'_');
            // a size may be separated from its base by whitespace
            let save = (self.offset, self.line, self.col);
            self.take_while(|b| b == b' ' || b == b'\t');
            if self.peek_at(0) != Some(b'\'') {
                (self.offset, self.line, self.col) = save;
                let value: u128 = digits
                    .replace('_', "")
                    .parse()
                    .map_err(|_| self.error(pos, format!("decimal literal `{digits}` out of range")))?;
                return Ok(Literal {
                    text: digits,
                    width: None,
                    value,
                    xz_mask: 0,
                });
            }
            let width: u32 = digits
                .replace('_', "")
                .parse()
                .map_err(|_| self.error(pos, format!("bad literal size `{digits}`")))?;
            if width == 0 || width > 128 {
                return Err(self.unsupported(pos, format!("literal of width {width}")));
            }
            Some(width)
        };
        self.bump(); // '
        if matches!(self.peek_at(0), Some(b's' | b'S')) {
            return Err(self.unsupported(pos, "signed literal"));
        }
        let radix = match self.peek_at(0).map(|b| b.to_ascii_lowercase()) {
            Some(b'b') => 2,
            Some(b'o') => 8,
            Some(b'd') => 10,
            Some(b'h') => 16,
            _ => return Err(self.error(pos, "expected base specifier after `'`")),
        };
        self.bump();
        self.take_while(|b| b == b' ' || b == b'\t');
        let digits = self.take_while(|b| b.is_ascii_hexdigit() || matches!(b, b'_' | b'x' | b'X' | b'z' | b'Z' | b'?'));
        if digits.is_empty() {
            return Err(self.error(pos, "expected digits in based literal"));
        }
        let bits_per_digit = match radix {
            2 => 1,
            8 => 3,
            16 => 4,
            _ => 0,
        };
        let mut value: u128 = 0;
        let mut xz: u128 = 0;
        for ch in digits.chars().filter(|c| *c != '_') {
            let lower = ch.to_ascii_lowercase();
            if matches!(lower, 'x' | 'z' | '?') {
                if radix == 10 {
                    return Err(self.unsupported(pos, "x/z digits in decimal literal"));
                }
                value <<= bits_per_digit;
                xz = (xz << bits_per_digit) | ((1u128 << bits_per_digit) - 1);
                continue;
            }
            let d = ch
                .to_digit(radix)
                .ok_or_else(|| self.error(pos, format!("digit `{ch}` invalid in base {radix}")))?;
            if radix == 10 {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add(d as u128))
                    .ok_or_else(|| self.error(pos, "literal out of range"))?;
            } else {
                value = (value << bits_per_digit) | d as u128;
                xz <<= bits_per_digit;
            }
        }
        if let Some(w) = size {
            let mask = if w >= 128 { u128::MAX } else { (1u128 << w) - 1 };
            value &= mask;
            xz &= mask;
        }
        Ok(Literal {
            text: self.src[start..self.offset].split_whitespace().collect(),
            width: size,
            value,
            xz_mask: xz,
        })
    }

    fn error(&self, pos: Pos, message: impl Into<String>) -> FrontendError {
        FrontendError::Parse {
            file: self.file.to_string(),
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }

    fn unsupported(&self, pos: Pos, construct: impl Into<String>) -> FrontendError {
        FrontendError::Unsupported {
            file: self.file.to_string(),
            line: pos.line,
            col: pos.col,
            construct: construct.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        Lexer::new(src, "t.v")
            .tokenize()
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn literals_in_all_bases() {
        let toks = kinds("8'hFF 4'b10_01 12'o17 10'd99 'h3 42 4'b1x0z 8 'h0f");
        let lits: Vec<_> = toks
            .iter()
            .filter_map(|t| match t {
                TokenKind::Number(l) => Some((l.width, l.value, l.xz_mask)),
                _ => None,
            })
            .collect();
        assert_eq!(
            lits,
            vec![
                (Some(8), 0xff, 0),
                (Some(4), 0b1001, 0),
                (Some(12), 0o17, 0),
                (Some(10), 99, 0),
                (None, 3, 0),
                (None, 42, 0),
                (Some(4), 0b1000, 0b0101),
                (Some(8), 0x0f, 0),
            ]
        );
    }

    #[test]
    fn longest_symbol_wins() {
        let toks = kinds("a <<< b !== c <= d");
        assert!(toks.contains(&TokenKind::Symbol("<<<")));
        assert!(toks.contains(&TokenKind::Symbol("!==")));
        assert!(toks.contains(&TokenKind::Symbol("<=")));
    }

    #[test]
    fn comments_attributes_and_timescale_are_skipped() {
        let toks = kinds("`timescale 1ns/1ps\n// c\n/* b\n */ (* keep *) wire");
        assert_eq!(toks, vec![TokenKind::Ident("wire".into()), TokenKind::Eof]);
    }

    #[test]
    fn positions_are_one_based() {
        let toks = Lexer::new("a\n  b", "t.v").tokenize().unwrap();
        assert_eq!(toks[1].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn system_tasks_are_unsupported() {
        let err = Lexer::new("$display", "t.v").tokenize().unwrap_err();
        assert!(matches!(err, FrontendError::Unsupported { .. }));
    }
}
