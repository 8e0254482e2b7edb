// SPDX-License-Identifier: Apache-2.0

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokKind {
    Ident(String),
    /// System identifier such as `$display`.
    System(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub found: char,
}

const SYMBOLS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|", "~^", "^~", "**", "+:",
    "-:", "+", "-", "*", "/", "%", "<", ">", "!", "~", "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{",
    "}", "#", "@", "=",
];

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let b = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;
    while i < b.len() {
        let c = b[i];
        let col = (i - line_start + 1) as u32;
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // (* attribute *) instances carry no dataflow.
        if c == b'(' && b.get(i + 1) == Some(&b'*') && !matches!(next_non_ws(b, i + 2), Some(b')')) {
            let mut j = i + 2;
            while j + 1 < b.len() && !(b[j] == b'*' && b[j + 1] == b')') {
                if b[j] == b'\n' {
                    line += 1;
                    line_start = j + 1;
                }
                j += 1;
            }
            i = (j + 2).min(b.len());
            continue;
        }
        let push = |toks: &mut Vec<Token>, kind| toks.push(Token { kind, line, col });
        if is_ident_start(c) {
            let s = i;
            while i < b.len() && is_ident_char(b[i]) {
                i += 1;
            }
            push(&mut toks, TokKind::Ident(text[s..i].to_owned()));
            continue;
        }
        if c == b'\\' {
            let s = i + 1;
            i = s;
            while i < b.len() && !b[i].is_ascii_whitespace() {
                i += 1;
            }
            push(&mut toks, TokKind::Ident(text[s..i].to_owned()));
            continue;
        }
        if c == b'$' {
            let s = i;
            i += 1;
            while i < b.len() && is_ident_char(b[i]) {
                i += 1;
            }
            push(&mut toks, TokKind::System(text[s..i].to_owned()));
            continue;
        }
        if c.is_ascii_digit() || (c == b'\'' && b.get(i + 1).is_some_and(|d| is_base_char(*d))) {
            let s = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                i += 1;
            }
            // Real literals are recognised so the parser can reject them.
            if i < b.len() && b[i] == b'.' && b.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                push(&mut toks, TokKind::Number(text[s..i].to_owned()));
                continue;
            }
            let mut j = i;
            while j < b.len() && (b[j] == b' ' || b[j] == b'\t') {
                j += 1;
            }
            if j < b.len() && b[j] == b'\'' {
                let mut k = j + 1;
                if k < b.len() && (b[k] == b's' || b[k] == b'S') {
                    k += 1;
                }
                if k < b.len() && is_base_char(b[k]) {
                    k += 1;
                    while k < b.len() && (b[k] == b' ' || b[k] == b'\t') {
                        k += 1;
                    }
                    while k < b.len()
                        && (b[k].is_ascii_hexdigit() || matches!(b[k], b'_' | b'x' | b'X' | b'z' | b'Z' | b'?'))
                    {
                        k += 1;
                    }
                    i = k;
                }
            }
            let lit: String = text[s..i].chars().filter(|c| *c != ' ' && *c != '\t').collect();
            push(&mut toks, TokKind::Number(lit));
            continue;
        }
        if c == b'"' {
            let s = i + 1;
            i += 1;
            while i < b.len() && b[i] != b'"' && b[i] != b'\n' {
                if b[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            let end = i.min(b.len());
            push(&mut toks, TokKind::Str(text[s..end].to_owned()));
            i = (i + 1).min(b.len());
            continue;
        }
        match SYMBOLS.iter().find(|s| b[i..].starts_with(s.as_bytes())) {
            Some(s) => {
                push(&mut toks, TokKind::Sym(s));
                i += s.len();
            }
            None => {
                let found = text[i..].chars().next().unwrap_or('?');
                return Err(LexError { line, col, found });
            }
        }
    }
    let col = (b.len() - line_start + 1) as u32;
    toks.push(Token { kind: TokKind::Eof, line, col });
    Ok(toks)
}

fn next_non_ws(b: &[u8], mut i: usize) -> Option<u8> {
    while i < b.len() && b[i].is_ascii_whitespace() {
        i += 1;
    }
    b.get(i).copied()
}

fn is_base_char(c: u8) -> bool {
    matches!(c, b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
}

/// Parses a Verilog integer literal into (value, width). The value is `None`
/// when the literal has x/z digits or does not fit in 128 bits.
pub fn parse_number(text: &str) -> (Option<u128>, Option<u32>) {
    let Some(q) = text.find('\'') else {
        let digits: String = text.chars().filter(|c| *c != '_').collect();
        return (digits.parse::<u128>().ok(), None);
    };
    let width = if q > 0 { text[..q].replace('_', "").parse::<u32>().ok() } else { None };
    let mut rest = &text[q + 1..];
    if rest.starts_with(['s', 'S']) {
        rest = &rest[1..];
    }
    let (radix, digits) = match rest.as_bytes().first() {
        Some(b'b' | b'B') => (2, &rest[1..]),
        Some(b'o' | b'O') => (8, &rest[1..]),
        Some(b'd' | b'D') => (10, &rest[1..]),
        Some(b'h' | b'H') => (16, &rest[1..]),
        _ => return (None, width),
    };
    let digits: String = digits.chars().filter(|c| *c != '_').collect();
    if digits.is_empty() {
        return (None, width);
    }
    let value = u128::from_str_radix(&digits, radix).ok();
    (value, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn lexes_numbers_and_ops() {
        let k = kinds("4'b1010 + 'hFF <<< 8 'd 3");
        assert_eq!(
            k,
            alloc::vec![
                TokKind::Number("4'b1010".into()),
                TokKind::Sym("+"),
                TokKind::Number("'hFF".into()),
                TokKind::Sym("<<<"),
                TokKind::Number("8'd3".into()),
                TokKind::Eof
            ]
        );
    }

    #[test]
    fn skips_attributes_but_not_star_sensitivity() {
        let k = kinds("(* keep *) wire w; always @(*)");
        assert_eq!(k[0], TokKind::Ident("wire".into()));
        assert!(k.contains(&TokKind::Sym("*")));
    }

    #[test]
    fn escaped_identifier() {
        assert_eq!(kinds("\\a[0] ;")[0], TokKind::Ident("a[0]".into()));
    }

    #[test]
    fn number_values() {
        assert_eq!(parse_number("4'b1010"), (Some(10), Some(4)));
        assert_eq!(parse_number("8'hff"), (Some(255), Some(8)));
        assert_eq!(parse_number("1'bx"), (None, Some(1)));
        assert_eq!(parse_number("1_000"), (Some(1000), None));
        assert_eq!(parse_number("'d7"), (Some(7), None));
    }

    #[test]
    fn positions() {
        let t = tokenize("a\n  b").unwrap();
        assert_eq!((t[1].line, t[1].col), (2, 3));
    }
}
