//! Reader and printer for the `.pepa` model format.
//!
//! ```text
//! model   := header* def+ sysdecl
//! header  := "high" "=" "{" identlist "}" ";"
//! def     := CONST ":=" term ";"
//! sysdecl := "system" term ";"
//! term    := hiding ( "<" identlist? ">" hiding )*
//! hiding  := choice ( "/" "{" identlist "}" )*
//! choice  := prefix ( "+" prefix )*
//! prefix  := "(" IDENT "," rate ")" "." prefix | CONST | "(" term ")"
//! rate    := RATIONAL | RATIONAL "*" "T" | "T"
//! ```
//!
//! Comments run from `%` to the end of the line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::terms::{
    format_rational, ActionSet, ActionType, ModelEnv, ProcessTerm, Rate, Rational, TAU_NAME,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    fn error(pos: Pos, message: impl Into<String>) -> Self {
        ParseDiagnostic { line: pos.line, column: pos.column, message: message.into(), severity: Severity::Error }
    }

    fn warning(pos: Pos, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            severity: Severity::Warning,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.column, sev, self.message)
    }
}

/// Every error found in a rejected model, in source order.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseErrors(pub Vec<ParseDiagnostic>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// A successfully parsed model together with its warnings.
#[derive(Clone, Debug)]
pub struct ParsedModel {
    pub env: ModelEnv,
    pub warnings: Vec<ParseDiagnostic>,
}

pub fn parse_model(source: &str) -> Result<ModelEnv, ParseErrors> {
    parse_model_with_warnings(source).map(|p| p.env)
}

pub fn parse_model_with_warnings(source: &str) -> Result<ParsedModel, ParseErrors> {
    let tokens = lex(source).map_err(|d| ParseErrors(vec![d]))?;
    Parser { tokens, pos: 0, errors: Vec::new() }.model()
}

/// Warnings about the high partition: declared-but-unused high types and
/// high types used as cooperation actions.
pub fn lint_high(env: &ModelEnv, pos: (usize, usize)) -> Vec<ParseDiagnostic> {
    let pos = Pos { line: pos.0, column: pos.1 };
    let occurring: BTreeSet<ActionType> = {
        let mut s = BTreeSet::new();
        for t in env.defs().values().chain(std::iter::once(env.system())) {
            collect_prefix_actions(t, &mut s);
        }
        s
    };
    let mut coop = BTreeSet::new();
    for t in env.defs().values().chain(std::iter::once(env.system())) {
        collect_coop_actions(t, &mut coop);
    }
    let mut out = Vec::new();
    for h in env.high() {
        if !occurring.contains(h) {
            out.push(ParseDiagnostic::warning(
                pos,
                format!("high action `{h}` never occurs in the model"),
            ));
        }
        if coop.contains(h) {
            out.push(ParseDiagnostic::warning(
                pos,
                format!("high action `{h}` is used in a cooperation set inside the model"),
            ));
        }
    }
    out
}

fn collect_prefix_actions(t: &ProcessTerm, out: &mut BTreeSet<ActionType>) {
    match t {
        ProcessTerm::Prefix(a, k) => {
            out.insert(a.action.clone());
            collect_prefix_actions(k, out);
        }
        ProcessTerm::Choice(l, r) | ProcessTerm::Cooperation(l, _, r) => {
            collect_prefix_actions(l, out);
            collect_prefix_actions(r, out);
        }
        ProcessTerm::Hiding(p, _) => collect_prefix_actions(p, out),
        ProcessTerm::Constant(_) => {}
    }
}

fn collect_coop_actions(t: &ProcessTerm, out: &mut BTreeSet<ActionType>) {
    match t {
        ProcessTerm::Prefix(_, k) => collect_coop_actions(k, out),
        ProcessTerm::Choice(l, r) => {
            collect_coop_actions(l, out);
            collect_coop_actions(r, out);
        }
        ProcessTerm::Cooperation(l, set, r) => {
            out.extend(set.iter().cloned());
            collect_coop_actions(l, out);
            collect_coop_actions(r, out);
        }
        ProcessTerm::Hiding(p, _) => collect_coop_actions(p, out),
        ProcessTerm::Constant(_) => {}
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Lower(String),
    Upper(String),
    Number(Rational),
    Top,
    KwHigh,
    KwSystem,
    Define,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LAngle,
    RAngle,
    Comma,
    Dot,
    Plus,
    Slash,
    Star,
    Equals,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Lower(s) | Tok::Upper(s) => format!("`{s}`"),
            Tok::Number(r) => format!("number `{}`", format_rational(r)),
            Tok::Top => "`T`".into(),
            Tok::KwHigh => "`high`".into(),
            Tok::KwSystem => "`system`".into(),
            Tok::Define => "`:=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LAngle => "`<`".into(),
            Tok::RAngle => "`>`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Star => "`*`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Cursor {
    chars: Vec<char>,
    i: usize,
    line: usize,
    column: usize,
}

impl Cursor {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek().filter(|&c| pred(c)) {
            out.push(c);
            self.bump();
        }
        out
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, Pos)>, ParseDiagnostic> {
    let mut cur = Cursor { chars: source.chars().collect(), i: 0, line: 1, column: 1 };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '%' {
            cur.take_while(|c| c != '\n');
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let word = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            let tok = match word.as_str() {
                "high" => Tok::KwHigh,
                "system" => Tok::KwSystem,
                "T" => Tok::Top,
                _ if c.is_ascii_uppercase() => Tok::Upper(word),
                _ if c.is_ascii_lowercase() => Tok::Lower(word),
                _ => {
                    return Err(ParseDiagnostic::error(
                        pos,
                        format!("identifier `{word}` must start with a letter"),
                    ))
                }
            };
            out.push((tok, pos));
            continue;
        }
        if c.is_ascii_digit() {
            let digits = |s: String| s.parse::<BigInt>().expect("ascii digits");
            let mut value = Rational::from_integer(digits(cur.take_while(|c| c.is_ascii_digit())));
            if cur.peek() == Some('.') && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
                let frac = cur.take_while(|c| c.is_ascii_digit());
                let scale = BigInt::from(10u32).pow(frac.len() as u32);
                value += Rational::new(digits(frac), scale);
            }
            if cur.peek() == Some('/') && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
                let den = digits(cur.take_while(|c| c.is_ascii_digit()));
                if den.is_zero() {
                    return Err(ParseDiagnostic::error(pos, "zero denominator in rate"));
                }
                value /= Rational::from_integer(den);
            }
            out.push((Tok::Number(value), pos));
            continue;
        }
        let tok = match c {
            ':' if cur.peek_at(1) == Some('=') => {
                cur.bump();
                Tok::Define
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '<' => Tok::LAngle,
            '>' => Tok::RAngle,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '+' => Tok::Plus,
            '/' => Tok::Slash,
            '*' => Tok::Star,
            '=' => Tok::Equals,
            ';' => Tok::Semi,
            other => {
                return Err(ParseDiagnostic::error(pos, format!("unexpected character `{other}`")))
            }
        };
        cur.bump();
        out.push((tok, pos));
    }
    out.push((Tok::Eof, cur.pos()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    pos: usize,
    errors: Vec<ParseDiagnostic>,
}

type PResult<T> = Result<T, ParseDiagnostic>;

struct Def {
    name: String,
    pos: Pos,
    term: ProcessTerm,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].0
    }

    fn here(&self) -> Pos {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> ParseDiagnostic {
        ParseDiagnostic::error(self.here(), format!("expected {what}, found {}", self.peek().describe()))
    }

    /// Skips to just past the next `;` after an error.
    fn recover(&mut self) {
        while !matches!(self.peek(), Tok::Semi | Tok::Eof) {
            self.bump();
        }
        if *self.peek() == Tok::Semi {
            self.bump();
        }
    }

    fn model(mut self) -> Result<ParsedModel, ParseErrors> {
        let mut high: Option<(ActionSet, Pos)> = None;
        let mut defs: Vec<Def> = Vec::new();
        let mut system: Option<(ProcessTerm, Pos)> = None;

        while *self.peek() != Tok::Eof {
            let start = self.here();
            let result = match self.peek().clone() {
                Tok::KwHigh => self.header().map(|set| {
                    if high.is_some() {
                        self.errors.push(ParseDiagnostic::error(start, "duplicate `high` declaration"));
                    } else if !defs.is_empty() || system.is_some() {
                        self.errors.push(ParseDiagnostic::error(
                            start,
                            "`high` declaration must precede all definitions",
                        ));
                    } else {
                        high = Some((set, start));
                    }
                }),
                Tok::Upper(_) => self.definition().map(|d| defs.push(d)),
                Tok::KwSystem => self.sysdecl().map(|t| {
                    if system.is_some() {
                        self.errors.push(ParseDiagnostic::error(start, "duplicate `system` declaration"));
                    } else {
                        system = Some((t, start));
                    }
                }),
                _ => Err(self.unexpected("`high`, a constant definition or `system`")),
            };
            if let Err(d) = result {
                self.errors.push(d);
                self.recover();
            } else if system.is_some() && *self.peek() != Tok::Eof && !matches!(self.peek(), Tok::KwSystem) {
                let d = self.unexpected("end of input after the system declaration");
                self.errors.push(d);
                self.recover();
            }
        }

        let mut table: BTreeMap<Arc<str>, ProcessTerm> = BTreeMap::new();
        let mut def_pos: BTreeMap<String, Pos> = BTreeMap::new();
        for d in &defs {
            if def_pos.contains_key(&d.name) {
                self.errors.push(ParseDiagnostic::error(d.pos, format!("duplicate definition of constant `{}`", d.name)));
            } else {
                def_pos.insert(d.name.clone(), d.pos);
                table.insert(Arc::from(d.name.as_str()), d.term.clone());
            }
        }
        if defs.is_empty() && self.errors.is_empty() {
            self.errors.push(ParseDiagnostic::error(self.here(), "a model needs at least one constant definition"));
        }
        let system = match system {
            Some(s) => Some(s),
            None => {
                self.errors.push(ParseDiagnostic::error(self.here(), "missing `system` declaration"));
                None
            }
        };
        let check_refs = |term: &ProcessTerm, pos: Pos, errors: &mut Vec<ParseDiagnostic>| {
            let mut seen = BTreeSet::new();
            term.for_each_constant(&mut |name| {
                if !table.contains_key(name) && seen.insert(name.to_string()) {
                    errors.push(ParseDiagnostic::error(pos, format!("undefined constant `{name}`")));
                }
            });
        };
        // a failed definition would otherwise also surface as an undefined constant
        if self.errors.is_empty() {
            for d in &defs {
                check_refs(&d.term, d.pos, &mut self.errors);
            }
            if let Some((t, p)) = &system {
                check_refs(t, *p, &mut self.errors);
            }
        }

        if !self.errors.is_empty() {
            self.errors.sort_by_key(|d| (d.line, d.column));
            return Err(ParseErrors(self.errors));
        }
        let (high_set, high_pos) = high.unwrap_or((ActionSet::new(), Pos { line: 1, column: 1 }));
        let (sys, _) = system.expect("checked above");
        let env = ModelEnv::new(table, high_set, sys).map_err(|e| {
            ParseErrors(vec![ParseDiagnostic::error(Pos { line: 1, column: 1 }, e.to_string())])
        })?;
        let warnings = lint_high(&env, (high_pos.line, high_pos.column));
        Ok(ParsedModel { env, warnings })
    }

    fn header(&mut self) -> PResult<ActionSet> {
        self.expect(Tok::KwHigh, "`high`")?;
        self.expect(Tok::Equals, "`=`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let set = self.ident_list(&Tok::RBrace)?;
        self.expect(Tok::RBrace, "`}`")?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(set)
    }

    fn definition(&mut self) -> PResult<Def> {
        let pos = self.here();
        let name = match self.bump() {
            Tok::Upper(n) => n,
            _ => unreachable!("caller checked"),
        };
        self.expect(Tok::Define, "`:=`")?;
        let term = self.term()?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(Def { name, pos, term })
    }

    fn sysdecl(&mut self) -> PResult<ProcessTerm> {
        self.expect(Tok::KwSystem, "`system`")?;
        let t = self.term()?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(t)
    }

    fn action(&mut self) -> PResult<ActionType> {
        let pos = self.here();
        match self.peek().clone() {
            Tok::Lower(name) => {
                self.bump();
                if name == TAU_NAME {
                    Err(ParseDiagnostic::error(pos, "`tau` is reserved; hide an action instead of writing tau"))
                } else {
                    Ok(ActionType::new(&name).expect("non-empty, not tau"))
                }
            }
            Tok::KwHigh | Tok::KwSystem => Err(ParseDiagnostic::error(
                pos,
                format!("{} is a keyword and cannot name an action", self.peek().describe()),
            )),
            _ => Err(self.unexpected("an action type (lowercase identifier)")),
        }
    }

    fn ident_list(&mut self, close: &Tok) -> PResult<ActionSet> {
        let mut set = ActionSet::new();
        if self.peek() == close {
            return Ok(set);
        }
        loop {
            set.insert(self.action()?);
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                return Ok(set);
            }
        }
    }

    fn term(&mut self) -> PResult<ProcessTerm> {
        let mut left = self.hiding()?;
        while *self.peek() == Tok::LAngle {
            self.bump();
            let set = self.ident_list(&Tok::RAngle)?;
            self.expect(Tok::RAngle, "`>`")?;
            let right = self.hiding()?;
            left = ProcessTerm::cooperation(left, set, right);
        }
        Ok(left)
    }

    fn hiding(&mut self) -> PResult<ProcessTerm> {
        let mut inner = self.choice()?;
        while *self.peek() == Tok::Slash {
            self.bump();
            self.expect(Tok::LBrace, "`{`")?;
            let set = self.ident_list(&Tok::RBrace)?;
            self.expect(Tok::RBrace, "`}`")?;
            inner = ProcessTerm::hiding(inner, set);
        }
        Ok(inner)
    }

    fn choice(&mut self) -> PResult<ProcessTerm> {
        let first_pos = self.here();
        let mut left = self.prefix()?;
        if *self.peek() == Tok::Plus && !left.is_sequential() {
            return Err(ParseDiagnostic::error(
                first_pos,
                "cooperation or hiding cannot be an operand of choice",
            ));
        }
        while *self.peek() == Tok::Plus {
            self.bump();
            let pos = self.here();
            let right = self.prefix()?;
            if !right.is_sequential() {
                return Err(ParseDiagnostic::error(pos, "cooperation or hiding cannot be an operand of choice"));
            }
            left = ProcessTerm::choice(left, right);
        }
        Ok(left)
    }

    fn prefix(&mut self) -> PResult<ProcessTerm> {
        match self.peek().clone() {
            Tok::LParen if matches!(self.peek_at(1), Tok::Lower(_) | Tok::KwHigh | Tok::KwSystem) => {
                self.bump();
                let action = self.action()?;
                self.expect(Tok::Comma, "`,`")?;
                let rate = self.rate()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Dot, "`.`")?;
                let pos = self.here();
                let cont = self.prefix()?;
                if !cont.is_sequential() {
                    return Err(ParseDiagnostic::error(pos, "cooperation or hiding cannot follow a prefix"));
                }
                Ok(ProcessTerm::prefix(action, rate, cont))
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Tok::Upper(name) => {
                self.bump();
                Ok(ProcessTerm::constant(&name))
            }
            _ => Err(self.unexpected("a prefix `(action, rate).`, a constant or `(`")),
        }
    }

    fn rate(&mut self) -> PResult<Rate> {
        let pos = self.here();
        match self.peek().clone() {
            Tok::Top => {
                self.bump();
                Ok(Rate::Passive(Rational::one()))
            }
            Tok::Number(value) => {
                self.bump();
                if *self.peek() == Tok::Star {
                    self.bump();
                    self.expect(Tok::Top, "`T` after `*`")?;
                    Rate::passive(value).map_err(|e| ParseDiagnostic::error(pos, e.to_string()))
                } else {
                    Rate::finite(value).map_err(|e| ParseDiagnostic::error(pos, e.to_string()))
                }
            }
            _ => Err(self.unexpected("a rate")),
        }
    }
}

// ---------------------------------------------------------------------------
// printer

fn render_set(set: &ActionSet) -> String {
    set.iter().map(ActionType::name).collect::<Vec<_>>().join(", ")
}

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Coop,
    Hiding,
    Choice,
    Prefix,
}

fn level_of(t: &ProcessTerm) -> Level {
    match t {
        ProcessTerm::Cooperation(..) => Level::Coop,
        ProcessTerm::Hiding(..) => Level::Hiding,
        ProcessTerm::Choice(..) => Level::Choice,
        ProcessTerm::Prefix(..) | ProcessTerm::Constant(_) => Level::Prefix,
    }
}

fn render_at(t: &ProcessTerm, min: Level, out: &mut String) {
    if level_of(t) < min {
        out.push('(');
        render_at(t, Level::Coop, out);
        out.push(')');
        return;
    }
    match t {
        ProcessTerm::Prefix(a, k) => {
            out.push('(');
            out.push_str(a.action.name());
            out.push_str(", ");
            out.push_str(&a.rate.to_string());
            out.push_str(").");
            render_at(k, Level::Prefix, out);
        }
        ProcessTerm::Choice(l, r) => {
            render_at(l, Level::Choice, out);
            out.push_str(" + ");
            render_at(r, Level::Prefix, out);
        }
        ProcessTerm::Hiding(p, set) => {
            render_at(p, Level::Hiding, out);
            out.push_str(" / {");
            out.push_str(&render_set(set));
            out.push('}');
        }
        ProcessTerm::Cooperation(l, set, r) => {
            render_at(l, Level::Coop, out);
            out.push_str(" <");
            out.push_str(&render_set(set));
            out.push_str("> ");
            render_at(r, Level::Hiding, out);
        }
        ProcessTerm::Constant(name) => out.push_str(name),
    }
}

/// Canonical text of a term; parsing it back yields a structurally equal term.
pub fn render_term(t: &ProcessTerm) -> String {
    let mut out = String::new();
    render_at(t, Level::Coop, &mut out);
    out
}

/// Canonical text of a whole model.
pub fn render_model(env: &ModelEnv) -> String {
    let mut out = String::new();
    if !env.high().is_empty() {
        out.push_str(&format!("high = {{{}}};\n", render_set(env.high())));
    }
    for (name, term) in env.defs() {
        out.push_str(&format!("{name} := {};\n", render_term(term)));
    }
    out.push_str(&format!("system {};\n", render_term(env.system())));
    out
}
