//! Reader and writer for the subset of the Hanoi Omega-Automata format used
//! here: one Büchi acceptance set, marks on edges, flat labels.
//!
//! Each atomic proposition is read as one alphabet symbol. A label must name a
//! single proposition, a disjunction of propositions, or `t` (all symbols);
//! a disjunction expands into one transition per symbol.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Nba, NbaError, Transition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HoaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {kind}")]
    Semantic { line: usize, kind: SemanticError },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("missing required header `{0}`")]
    MissingHeader(&'static str),
    #[error("header `{0}` given twice")]
    RepeatedHeader(String),
    #[error("state {state} is not declared (States: {declared})")]
    UndeclaredState { state: usize, declared: usize },
    #[error("only `Acceptance: 1 Inf(0)` (acc-name: Buchi) is supported, found `{0}`")]
    NonBuchiAcceptance(String),
    #[error(
        "state-based acceptance marks are not supported; put `{{0}}` on the outgoing edges instead"
    )]
    StateBasedAcceptance,
    #[error("acceptance mark {0} does not exist; the only acceptance set is 0")]
    UnknownAcceptanceSet(usize),
    #[error(
        "label `{0}` is not flat; use a single proposition, `t`, or a disjunction such as [0 | 2]"
    )]
    NonFlatLabel(String),
    #[error("edge without a label; implicit labels are not supported")]
    MissingLabel,
    #[error("proposition {index} is not declared (AP: {declared})")]
    UnknownProposition { index: usize, declared: usize },
    #[error("exactly one initial state is required")]
    InitialStateCount,
    #[error("AP header declares {declared} propositions but lists {listed}")]
    ApCountMismatch { declared: usize, listed: usize },
    #[error("state {0} has two `State:` blocks")]
    RepeatedState(usize),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("property `{0}` is declared but does not hold")]
    PropertyViolated(&'static str),
    #[error(transparent)]
    Invalid(#[from] NbaError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Header(String),
    Ident(String),
    Int(usize),
    Str(String),
    Body,
    End,
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> HoaError {
    HoaError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, HoaError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(syntax(tl, tc, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let tok = if c == '-' {
            let rest: String = chars[i..].iter().take(8).collect();
            if rest == "--BODY--" {
                for _ in 0..8 {
                    advance(&mut i, &mut line, &mut col, '-');
                }
                Tok::Body
            } else if rest.starts_with("--END--") {
                for _ in 0..7 {
                    advance(&mut i, &mut line, &mut col, '-');
                }
                Tok::End
            } else {
                return Err(syntax(tl, tc, "unexpected `-`"));
            }
        } else if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(tl, tc, "unterminated string")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') if i + 1 < chars.len() => {
                        advance(&mut i, &mut line, &mut col, '\\');
                        let e = chars[i];
                        s.push(e);
                        advance(&mut i, &mut line, &mut col, e);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_digit() {
            let mut value: usize = 0;
            while let Some(&d) = chars.get(i).filter(|d| d.is_ascii_digit()) {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add(d as usize - '0' as usize))
                    .ok_or_else(|| syntax(tl, tc, "integer too large"))?;
                advance(&mut i, &mut line, &mut col, d);
            }
            Tok::Int(value)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&d) = chars
                .get(i)
                .filter(|d| d.is_ascii_alphanumeric() || **d == '_' || **d == '-')
            {
                s.push(d);
                advance(&mut i, &mut line, &mut col, d);
            }
            if chars.get(i) == Some(&':') {
                advance(&mut i, &mut line, &mut col, ':');
                Tok::Header(s)
            } else {
                Tok::Ident(s)
            }
        } else if "[](){}!&|@".contains(c) {
            advance(&mut i, &mut line, &mut col, c);
            Tok::Punct(c)
        } else {
            return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
        };
        out.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    last_line: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|t| t.line)
            .unwrap_or(self.last_line)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn err_here(&self, message: impl Into<String>) -> HoaError {
        match self.toks.get(self.pos) {
            Some(t) => syntax(t.line, t.column, message),
            None => syntax(
                self.last_line,
                1,
                format!("{} (at end of input)", message.into()),
            ),
        }
    }

    fn semantic(&self, line: usize, kind: SemanticError) -> HoaError {
        HoaError::Semantic { line, kind }
    }

    fn expect_int(&mut self) -> Result<usize, HoaError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err_here("expected an integer")),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), HoaError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_here(format!("expected `{c}`")))
        }
    }

    /// Tokens up to the next header or `--BODY--`.
    fn header_args(&mut self) -> Vec<Token> {
        let mut args = Vec::new();
        while let Some(t) = self.toks.get(self.pos) {
            if matches!(t.tok, Tok::Header(_) | Tok::Body) {
                break;
            }
            args.push(t.clone());
            self.pos += 1;
        }
        args
    }
}

fn render(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| match &t.tok {
            Tok::Header(h) => format!("{h}:"),
            Tok::Ident(s) => s.clone(),
            Tok::Int(v) => v.to_string(),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Body => "--BODY--".into(),
            Tok::End => "--END--".into(),
            Tok::Punct(c) => c.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses HOA-subset text into an automaton.
pub fn parse_hoa(text: &str) -> Result<Nba, HoaError> {
    let toks = tokenize(text)?;
    let last_line = text.lines().count().max(1);
    let mut p = Parser {
        toks,
        pos: 0,
        last_line,
    };

    match p.next() {
        Some(Token {
            tok: Tok::Header(h),
            ..
        }) if h == "HOA" => {}
        _ => return Err(syntax(1, 1, "input must start with `HOA: v1`")),
    }
    match p.next() {
        Some(Token {
            tok: Tok::Ident(v), ..
        }) if v == "v1" => {}
        Some(t) => return Err(syntax(t.line, t.column, "only `HOA: v1` is supported")),
        None => return Err(p.err_here("expected version")),
    }

    let mut num_states: Option<usize> = None;
    let mut start: Option<usize> = None;
    let mut aps: Option<Vec<String>> = None;
    let mut acceptance_seen = false;
    let mut declared_gfm = false;
    let mut declared_deterministic = false;
    let mut declared_complete = false;

    loop {
        let Some(head) = p.next() else {
            return Err(p.err_here("expected `--BODY--`"));
        };
        let line = head.line;
        let name = match head.tok {
            Tok::Body => break,
            Tok::Header(name) => name,
            _ => return Err(syntax(head.line, head.column, "expected a header name")),
        };
        let args = p.header_args();
        let ints: Vec<Option<usize>> = args
            .iter()
            .map(|t| match t.tok {
                Tok::Int(v) => Some(v),
                _ => None,
            })
            .collect();
        let single_int = |what: &str| -> Result<usize, HoaError> {
            match ints.as_slice() {
                [Some(v)] => Ok(*v),
                _ => Err(syntax(
                    line,
                    head.column,
                    format!("`{what}:` expects one integer"),
                )),
            }
        };
        match name.as_str() {
            "States" => {
                if num_states.is_some() {
                    return Err(p.semantic(line, SemanticError::RepeatedHeader(name)));
                }
                num_states = Some(single_int("States")?);
            }
            "Start" => {
                if start.is_some() || args.len() != 1 {
                    return Err(p.semantic(line, SemanticError::InitialStateCount));
                }
                start = Some(single_int("Start")?);
            }
            "AP" => {
                if aps.is_some() {
                    return Err(p.semantic(line, SemanticError::RepeatedHeader(name)));
                }
                let Some(Some(declared)) = ints.first() else {
                    return Err(syntax(line, head.column, "`AP:` expects a count"));
                };
                let mut names = Vec::new();
                for t in &args[1..] {
                    match &t.tok {
                        Tok::Str(s) => names.push(s.clone()),
                        _ => return Err(syntax(t.line, t.column, "expected a quoted proposition")),
                    }
                }
                if names.len() != *declared {
                    return Err(p.semantic(
                        line,
                        SemanticError::ApCountMismatch {
                            declared: *declared,
                            listed: names.len(),
                        },
                    ));
                }
                aps = Some(names);
            }
            "Acceptance" => {
                let shape: Vec<&Tok> = args.iter().map(|t| &t.tok).collect();
                let ok = matches!(
                    shape.as_slice(),
                    [Tok::Int(1), Tok::Ident(inf), Tok::Punct('('), Tok::Int(0), Tok::Punct(')')]
                        if inf == "Inf"
                );
                if !ok {
                    return Err(p.semantic(line, SemanticError::NonBuchiAcceptance(render(&args))));
                }
                acceptance_seen = true;
            }
            "acc-name" => {
                let ok =
                    matches!(args.as_slice(), [Token { tok: Tok::Ident(b), .. }] if b == "Buchi");
                if !ok {
                    return Err(p.semantic(line, SemanticError::NonBuchiAcceptance(render(&args))));
                }
            }
            "properties" => {
                for t in &args {
                    let Tok::Ident(prop) = &t.tok else {
                        return Err(syntax(t.line, t.column, "expected a property name"));
                    };
                    match prop.as_str() {
                        "state-acc" => {
                            return Err(p.semantic(line, SemanticError::StateBasedAcceptance))
                        }
                        "implicit-labels" => {
                            return Err(p.semantic(line, SemanticError::MissingLabel))
                        }
                        "gfm" => declared_gfm = true,
                        "deterministic" => declared_deterministic = true,
                        "complete" => declared_complete = true,
                        _ => {}
                    }
                }
            }
            "name" | "tool" => {}
            other if other.starts_with(|c: char| c.is_ascii_lowercase()) => {}
            other => {
                return Err(p.semantic(
                    line,
                    SemanticError::Unsupported(format!("header `{other}:`")),
                ))
            }
        }
    }

    let n = num_states.ok_or(HoaError::Semantic {
        line: 1,
        kind: SemanticError::MissingHeader("States"),
    })?;
    let initial = start.ok_or(HoaError::Semantic {
        line: 1,
        kind: SemanticError::MissingHeader("Start"),
    })?;
    let alphabet = aps.ok_or(HoaError::Semantic {
        line: 1,
        kind: SemanticError::MissingHeader("AP"),
    })?;
    if !acceptance_seen {
        return Err(HoaError::Semantic {
            line: 1,
            kind: SemanticError::MissingHeader("Acceptance"),
        });
    }
    if initial >= n {
        return Err(HoaError::Semantic {
            line: 1,
            kind: SemanticError::UndeclaredState {
                state: initial,
                declared: n,
            },
        });
    }

    let mut names: Vec<Option<String>> = vec![None; n];
    let mut seen_state = vec![false; n];
    let mut transitions = Vec::new();
    let mut current: Option<usize> = None;

    loop {
        let line = p.line();
        match p.peek().cloned() {
            None => return Err(p.err_here("expected `--END--`")),
            Some(Tok::End) => {
                p.pos += 1;
                break;
            }
            Some(Tok::Header(h)) if h == "State" => {
                p.pos += 1;
                if p.peek() == Some(&Tok::Punct('[')) {
                    return Err(p.semantic(line, SemanticError::Unsupported("state labels".into())));
                }
                let q = p.expect_int()?;
                if q >= n {
                    return Err(p.semantic(
                        line,
                        SemanticError::UndeclaredState {
                            state: q,
                            declared: n,
                        },
                    ));
                }
                if seen_state[q] {
                    return Err(p.semantic(line, SemanticError::RepeatedState(q)));
                }
                seen_state[q] = true;
                if let Some(Tok::Str(s)) = p.peek().cloned() {
                    p.pos += 1;
                    names[q] = Some(s);
                }
                if p.peek() == Some(&Tok::Punct('{')) {
                    return Err(p.semantic(line, SemanticError::StateBasedAcceptance));
                }
                current = Some(q);
            }
            Some(Tok::Punct('[')) => {
                let Some(source) = current else {
                    return Err(p.err_here("edge outside of a `State:` block"));
                };
                p.pos += 1;
                let symbols = parse_label(&mut p, alphabet.len(), line)?;
                p.expect_punct(']')?;
                let target = p.expect_int()?;
                if target >= n {
                    return Err(p.semantic(
                        line,
                        SemanticError::UndeclaredState {
                            state: target,
                            declared: n,
                        },
                    ));
                }
                if p.peek() == Some(&Tok::Punct('&')) {
                    return Err(p.semantic(
                        line,
                        SemanticError::Unsupported("universal branching".into()),
                    ));
                }
                let mut accepting = false;
                if p.peek() == Some(&Tok::Punct('{')) {
                    p.pos += 1;
                    while let Some(Tok::Int(set)) = p.peek().cloned() {
                        p.pos += 1;
                        if set != 0 {
                            return Err(p.semantic(line, SemanticError::UnknownAcceptanceSet(set)));
                        }
                        accepting = true;
                    }
                    p.expect_punct('}')?;
                }
                for symbol in symbols {
                    transitions.push(Transition {
                        source,
                        symbol,
                        target,
                        accepting,
                    });
                }
            }
            Some(Tok::Int(_)) if current.is_some() => {
                return Err(p.semantic(line, SemanticError::MissingLabel));
            }
            Some(_) => return Err(p.err_here("expected `State:`, an edge, or `--END--`")),
        }
    }
    if p.peek().is_some() {
        return Err(p.err_here("trailing input after `--END--`"));
    }

    let nba = Nba::with_state_names(alphabet, names, initial, transitions, declared_gfm).map_err(
        |e| HoaError::Semantic {
            line: 1,
            kind: SemanticError::Invalid(e),
        },
    )?;
    if declared_deterministic && !nba.is_deterministic() {
        return Err(HoaError::Semantic {
            line: 1,
            kind: SemanticError::PropertyViolated("deterministic"),
        });
    }
    if declared_complete && !nba.is_complete() {
        return Err(HoaError::Semantic {
            line: 1,
            kind: SemanticError::PropertyViolated("complete"),
        });
    }
    Ok(nba)
}

// label := disj ; disj := atom ('|' atom)* ; atom := INT | 't' | '(' disj ')'
fn parse_label(p: &mut Parser, num_aps: usize, line: usize) -> Result<Vec<usize>, HoaError> {
    let start = p.pos;
    let mut symbols = Vec::new();
    parse_disjunction(p, num_aps, line, &mut symbols).map_err(|e| match e {
        LabelError::Hoa(e) => e,
        LabelError::NotFlat => {
            // find the closing bracket to quote the whole label
            let mut end = start;
            while end < p.toks.len() && p.toks[end].tok != Tok::Punct(']') {
                end += 1;
            }
            HoaError::Semantic {
                line,
                kind: SemanticError::NonFlatLabel(render(&p.toks[start..end])),
            }
        }
    })?;
    Ok(symbols)
}

enum LabelError {
    Hoa(HoaError),
    NotFlat,
}

impl From<HoaError> for LabelError {
    fn from(e: HoaError) -> Self {
        LabelError::Hoa(e)
    }
}

fn parse_disjunction(
    p: &mut Parser,
    num_aps: usize,
    line: usize,
    out: &mut Vec<usize>,
) -> Result<(), LabelError> {
    loop {
        match p.peek().cloned() {
            Some(Tok::Int(index)) => {
                p.pos += 1;
                if index >= num_aps {
                    return Err(p
                        .semantic(
                            line,
                            SemanticError::UnknownProposition {
                                index,
                                declared: num_aps,
                            },
                        )
                        .into());
                }
                if !out.contains(&index) {
                    out.push(index);
                }
            }
            Some(Tok::Ident(t)) if t == "t" => {
                p.pos += 1;
                for s in 0..num_aps {
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
            }
            Some(Tok::Punct('(')) => {
                p.pos += 1;
                parse_disjunction(p, num_aps, line, out)?;
                p.expect_punct(')')?;
            }
            Some(Tok::Punct('!')) | Some(Tok::Ident(_)) | Some(Tok::Punct('@')) => {
                return Err(LabelError::NotFlat)
            }
            _ => return Err(p.err_here("expected a proposition index").into()),
        }
        match p.peek() {
            Some(Tok::Punct('|')) => p.pos += 1,
            Some(Tok::Punct('&')) => return Err(LabelError::NotFlat),
            _ => return Ok(()),
        }
    }
}

/// Writes the canonical HOA-subset text for `nba`.
///
/// Every state gets a `State:` block; every transition is one edge with a
/// single-proposition label, in stored order.
pub fn serialize_hoa(nba: &Nba) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "HOA: v1");
    let _ = writeln!(out, "States: {}", nba.num_states());
    let _ = writeln!(out, "Start: {}", nba.initial());
    let aps: Vec<String> = nba.alphabet().iter().map(|a| format!("{a:?}")).collect();
    let _ = writeln!(out, "AP: {} {}", aps.len(), aps.join(" "));
    let _ = writeln!(out, "acc-name: Buchi");
    let _ = writeln!(out, "Acceptance: 1 Inf(0)");
    let mut props = String::from("properties: trans-labels explicit-labels trans-acc");
    if nba.is_complete() {
        props.push_str(" complete");
    }
    let deterministic = nba.is_deterministic();
    if deterministic {
        props.push_str(" deterministic");
    } else if nba.gfm_asserted() {
        props.push_str(" gfm");
    }
    let _ = writeln!(out, "{props}");
    let _ = writeln!(out, "--BODY--");
    for q in 0..nba.num_states() {
        match nba.state_name(q) {
            Some(name) => {
                let _ = writeln!(out, "State: {q} {name:?}");
            }
            None => {
                let _ = writeln!(out, "State: {q}");
            }
        }
        for t in nba.transitions().iter().filter(|t| t.source == q) {
            let mark = if t.accepting { " {0}" } else { "" };
            let _ = writeln!(out, "[{}] {}{}", t.symbol, t.target, mark);
        }
    }
    let _ = writeln!(out, "--END--");
    out
}
