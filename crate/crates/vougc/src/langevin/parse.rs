//! Parser for expressions and system-definition documents.
//!
//! Document grammar: sections `[system]` (n = <int>), `[params]` (name = value
//! per line), `[drift]` (n lines `dyK = <expr>`), `[sigma]` (one of
//! `scalar = <nu>`, a constant matrix as n whitespace-separated rows, or n*n
//! expression lines `sK,L = <expr>`). `#` starts a comment; UTF-8 throughout.
//!
//! Expressions: infix arithmetic with standard precedence, `^` right-
//! associative binding tighter than unary minus on its left operand,
//! functions by name, state variables `y1..yn`, parameters by declared name.

use super::expr::{bin, call, neg, BinOp, Expr, Func, MAX_DEPTH};
use super::{DiffusionSpec, LangevinSystem};
use crate::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

/// Tokenize one expression; `col0` is the 1-based column of `text`'s first
/// character within its line.
fn tokenize(text: &str, line: usize, col0: usize) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' | '\u{2212}' => Tok::Minus,
            '*' | '\u{d7}' => Tok::Star,
            '/' | '\u{f7}' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(line, col, format!("invalid number `{s}`")))?;
                out.push(Spanned {
                    tok: Tok::Num(v),
                    line,
                    col,
                });
                continue;
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Spanned {
                    tok: Tok::Ident(s),
                    line,
                    col,
                });
                continue;
            }
            _ => return Err(err(line, col, format!("unexpected character `{c}`"))),
        };
        out.push(Spanned { tok, line, col });
        i += 1;
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    n: usize,
    params: &'a BTreeMap<String, f64>,
    line: usize,
    end_col: usize,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => (self.line, self.end_col),
        }
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => {
                let (l, c) = self.here();
                Err(err(l, c, format!("expected {what}")))
            }
        }
    }

    // expr := term { (+|-) term }
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = bin(BinOp::Add, lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = bin(BinOp::Sub, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary { (*|/) unary }
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = bin(BinOp::Mul, lhs, rhs);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = bin(BinOp::Div, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(neg(self.unary()?));
        }
        self.power()
    }

    // power := atom [ '^' unary ]   (right-associative)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (l, c) = self.here();
        match self.bump().map(|s| s.tok) {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let f = Func::by_name(&name).ok_or_else(|| {
                        err(l, c, format!("unknown function `{name}`"))
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "closing `)`")?;
                    return Ok(call(f, arg));
                }
                if let Some(rest) = name.strip_prefix('y') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.n {
                            return Ok(Expr::Var(k - 1));
                        }
                        return Err(err(
                            l,
                            c,
                            format!("state variable `{name}` out of range 1..{}", self.n),
                        ));
                    }
                }
                if let Some(&v) = self.params.get(&name) {
                    return Ok(Expr::Num(v));
                }
                Err(err(l, c, format!("unknown identifier `{name}`")))
            }
            _ => Err(err(
                l,
                c,
                "expected number, identifier or `(`".to_string(),
            )),
        }
    }
}

/// Parse one expression against a dimension and parameter table; parameters
/// are folded to their numeric values.
pub fn parse_expression(
    text: &str,
    line: usize,
    col0: usize,
    n: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Expr> {
    let toks = tokenize(text, line, col0)?;
    let end_col = col0 + text.chars().count();
    let mut p = ExprParser {
        toks,
        pos: 0,
        n,
        params,
        line,
        end_col,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        let (l, c) = p.here();
        return Err(err(l, c, "unexpected trailing input"));
    }
    if e.depth() > MAX_DEPTH {
        return Err(err(
            line,
            col0,
            format!("expression depth exceeds {MAX_DEPTH}"),
        ));
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    System,
    Params,
    Drift,
    Sigma,
}

struct Line<'a> {
    no: usize,
    text: &'a str,
}

/// Parse a full system-definition document into a validated system.
pub fn parse_system(text: &str) -> Result<LangevinSystem> {
    let mut section = Section::None;
    let mut system_lines: Vec<Line> = Vec::new();
    let mut param_lines: Vec<Line> = Vec::new();
    let mut drift_lines: Vec<Line> = Vec::new();
    let mut sigma_lines: Vec<Line> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            section = match trimmed {
                "[system]" => Section::System,
                "[params]" => Section::Params,
                "[drift]" => Section::Drift,
                "[sigma]" => Section::Sigma,
                other => {
                    return Err(err(
                        no,
                        content.find('[').unwrap_or(0) + 1,
                        format!("unknown section `{other}`"),
                    ))
                }
            };
            continue;
        }
        let entry = Line { no, text: content };
        match section {
            Section::None => {
                return Err(err(no, 1, "content before any section header"))
            }
            Section::System => system_lines.push(entry),
            Section::Params => param_lines.push(entry),
            Section::Drift => drift_lines.push(entry),
            Section::Sigma => sigma_lines.push(entry),
        }
    }

    // [system]
    let mut n: Option<usize> = None;
    for l in &system_lines {
        let (key, val, _) = split_assignment(l)?;
        if key != "n" {
            return Err(err(l.no, 1, format!("unknown [system] key `{key}`")));
        }
        let v: usize = val
            .trim()
            .parse()
            .map_err(|_| err(l.no, 1, format!("invalid dimension `{}`", val.trim())))?;
        n = Some(v);
    }
    let n = n.ok_or_else(|| err(1, 1, "missing [system] section with `n = <dim>`"))?;
    if n == 0 {
        return Err(err(1, 1, "dimension must be at least 1"));
    }

    // [params]
    let mut params = BTreeMap::new();
    for l in &param_lines {
        let (key, val, _) = split_assignment(l)?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| err(l.no, 1, format!("invalid parameter value `{}`", val.trim())))?;
        if !v.is_finite() {
            return Err(err(l.no, 1, format!("parameter `{key}` is not finite")));
        }
        if params.insert(key.to_string(), v).is_some() {
            return Err(err(l.no, 1, format!("duplicate parameter `{key}`")));
        }
    }

    // [drift]
    if drift_lines.len() != n {
        return Err(err(
            drift_lines.last().map(|l| l.no).unwrap_or(1),
            1,
            format!("[drift] has {} lines, expected {n}", drift_lines.len()),
        ));
    }
    let mut drift: Vec<Option<Expr>> = vec![None; n];
    for l in &drift_lines {
        let (key, val, val_col) = split_assignment(l)?;
        let k = key
            .strip_prefix("dy")
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&k| k >= 1 && k <= n)
            .ok_or_else(|| {
                err(l.no, 1, format!("expected `dy1`..`dy{n}` on the left, got `{key}`"))
            })?;
        if drift[k - 1].is_some() {
            return Err(err(l.no, 1, format!("duplicate drift component `dy{k}`")));
        }
        drift[k - 1] = Some(parse_expression(val, l.no, val_col, n, &params)?);
    }
    let drift: Vec<Expr> = drift.into_iter().map(|e| e.unwrap()).collect();

    // [sigma]
    if sigma_lines.is_empty() {
        return Err(err(1, 1, "missing [sigma] section"));
    }
    let sigma = parse_sigma(&sigma_lines, n, &params)?;

    LangevinSystem::from_parts(n, drift, sigma, params)
}

/// Split `lhs = rhs`; returns (lhs trimmed, rhs slice, 1-based column of rhs).
fn split_assignment<'a>(l: &Line<'a>) -> Result<(&'a str, &'a str, usize)> {
    let eq = l
        .text
        .find('=')
        .ok_or_else(|| err(l.no, l.text.chars().count() + 1, "expected `=`"))?;
    let lhs = l.text[..eq].trim();
    if lhs.is_empty() {
        return Err(err(l.no, 1, "empty left-hand side"));
    }
    let rhs = &l.text[eq + 1..];
    let col = l.text[..eq + 1].chars().count() + 1;
    Ok((lhs, rhs, col))
}

fn parse_sigma(
    lines: &[Line],
    n: usize,
    params: &BTreeMap<String, f64>,
) -> Result<DiffusionSpec> {
    let first = &lines[0];
    if let Some(eq) = first.text.find('=') {
        let lhs = first.text[..eq].trim();
        if lhs == "scalar" {
            if lines.len() != 1 {
                return Err(err(
                    lines[1].no,
                    1,
                    "scalar sigma takes a single line",
                ));
            }
            let (_, val, _) = split_assignment(first)?;
            let v: f64 = val
                .trim()
                .parse()
                .map_err(|_| err(first.no, 1, format!("invalid scalar `{}`", val.trim())))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(err(first.no, 1, "scalar sigma must be positive"));
            }
            return Ok(DiffusionSpec::ScalarIdentity(v));
        }
        // expression entries: sK,L = <expr>
        let mut entries: Vec<Vec<Option<Expr>>> = vec![vec![None; n]; n];
        for l in lines {
            let (key, val, val_col) = split_assignment(l)?;
            let body = key.strip_prefix('s').ok_or_else(|| {
                err(l.no, 1, format!("expected `sK,L = <expr>`, got `{key}`"))
            })?;
            let (ks, ls) = body.split_once(',').ok_or_else(|| {
                err(l.no, 1, format!("expected `sK,L = <expr>`, got `{key}`"))
            })?;
            let (k, m) = match (ks.parse::<usize>(), ls.parse::<usize>()) {
                (Ok(k), Ok(m)) if (1..=n).contains(&k) && (1..=n).contains(&m) => (k, m),
                _ => {
                    return Err(err(
                        l.no,
                        1,
                        format!("sigma indices in `{key}` out of range 1..{n}"),
                    ))
                }
            };
            if entries[k - 1][m - 1].is_some() {
                return Err(err(l.no, 1, format!("duplicate sigma entry `{key}`")));
            }
            entries[k - 1][m - 1] = Some(parse_expression(val, l.no, val_col, n, params)?);
        }
        let mut rows = Vec::with_capacity(n);
        for (k, row) in entries.into_iter().enumerate() {
            let mut out = Vec::with_capacity(n);
            for (m, e) in row.into_iter().enumerate() {
                out.push(e.ok_or_else(|| {
                    err(
                        lines.last().unwrap().no,
                        1,
                        format!("missing sigma entry s{},{}", k + 1, m + 1),
                    )
                })?);
            }
            rows.push(out);
        }
        return Ok(DiffusionSpec::Expressions(rows));
    }

    // constant matrix: n rows of n numbers
    if lines.len() != n {
        return Err(err(
            lines.last().unwrap().no,
            1,
            format!("[sigma] matrix has {} rows, expected {n}", lines.len()),
        ));
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (r, l) in lines.iter().enumerate() {
        let vals: Vec<&str> = l.text.split_whitespace().collect();
        if vals.len() != n {
            return Err(err(
                l.no,
                1,
                format!("row has {} entries, expected {n}", vals.len()),
            ));
        }
        for (c, s) in vals.iter().enumerate() {
            m[(r, c)] = s
                .parse()
                .map_err(|_| err(l.no, 1, format!("invalid number `{s}`")))?;
        }
    }
    Ok(DiffusionSpec::Constant(m))
}
