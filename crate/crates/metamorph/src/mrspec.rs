//! The `.mrs` relation-spec DSL: a small block language that declares
//! metamorphic relations as data. This module holds the lexer, a
//! recursive-descent LL(1) parser with positioned diagnostics, the
//! semantic validator, and the canonical serializer whose output feeds
//! the run config hash.
//!
//! ```text
//! # invariance under a single misspelling
//! relation "misspell_invariance" {
//!   applies_to: any;
//!   transform: misspell();
//!   expect: equivalent(comparator = token_jaccard, threshold = 0.6);
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{Aggregation, AppliesTo, MetamorphicRelation, TaskKind};
use crate::relations::{ComparatorKind, ComparatorSpec, RelationKind};
use crate::transforms::{canonical_name, TransformStep};

/// 1-based position of a token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// A positioned parse or validation message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub column: u32,
}

impl Diagnostic {
    fn error(message: impl Into<String>, span: Span) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            line: span.line,
            column: span.column,
        }
    }

    fn warning(message: impl Into<String>, span: Span) -> Diagnostic {
        Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
            line: span.line,
            column: span.column,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}:{}: {}", self.severity, self.line, self.column, self.message)
    }
}

/// True when no diagnostic in the list is an error.
pub fn no_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().all(|d| d.severity != Severity::Error)
}

// ---------------------------------------------------------------------
// Syntax tree
//
// The parser accepts anything grammatically well-formed and leaves
// semantic judgment (registries, ranges, involutions) to `validate`, so
// every semantic complaint carries the span of the offending token.

/// A parsed `.mrs` document.
#[derive(Debug, Clone, PartialEq)]
pub struct MrSpecDoc {
    pub relations: Vec<MrRelationDecl>,
}

impl MrSpecDoc {
    /// Declaration position of each relation, by id.
    pub fn spans(&self) -> BTreeMap<String, Span> {
        self.relations.iter().map(|r| (r.id.clone(), r.span)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrRelationDecl {
    pub id: String,
    pub span: Span,
    pub applies_to: Option<(Vec<String>, Span)>,
    pub transform: Option<(Vec<StepDecl>, Span)>,
    pub expect: Option<(ExpectDecl, Span)>,
    pub repetitions: Option<(u64, Span)>,
    pub aggregate: Option<(String, Span)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDecl {
    pub name: String,
    pub args: Vec<ArgDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectDecl {
    pub kind: String,
    pub args: Vec<ArgDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgDecl {
    pub key: String,
    pub value: ValueDecl,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueDecl {
    Str(String),
    /// Raw numeral text, kept verbatim for faithful reserialization.
    Number(String),
    Ident(String),
    Map(Vec<MapEntry>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub key: String,
    pub value: String,
    pub span: Span,
}

// ---------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Ident(String),
    Str(String),
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Eq,
    PipeArrow,
    Eof,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Ident(name) => format!("identifier {name:?}"),
            TokenKind::Str(_) => "string".to_string(),
            TokenKind::Number(raw) => format!("number {raw}"),
            TokenKind::LBrace => "'{'".to_string(),
            TokenKind::RBrace => "'}'".to_string(),
            TokenKind::LParen => "'('".to_string(),
            TokenKind::RParen => "')'".to_string(),
            TokenKind::Colon => "':'".to_string(),
            TokenKind::Semi => "';'".to_string(),
            TokenKind::Comma => "','".to_string(),
            TokenKind::Eq => "'='".to_string(),
            TokenKind::PipeArrow => "'|>'".to_string(),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Lexer<'a> {
        Lexer { chars: source.chars().peekable(), line: 1, column: 1 }
    }

    fn here(&self) -> Span {
        Span { line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn lex(mut self) -> Result<Vec<Token>, Diagnostic> {
        let mut tokens = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '#' {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let span = self.here();
            let Some(&c) = self.chars.peek() else {
                tokens.push(Token { kind: TokenKind::Eof, span });
                return Ok(tokens);
            };
            let kind = match c {
                '{' => self.punct(TokenKind::LBrace),
                '}' => self.punct(TokenKind::RBrace),
                '(' => self.punct(TokenKind::LParen),
                ')' => self.punct(TokenKind::RParen),
                ':' => self.punct(TokenKind::Colon),
                ';' => self.punct(TokenKind::Semi),
                ',' => self.punct(TokenKind::Comma),
                '=' => self.punct(TokenKind::Eq),
                '|' => {
                    self.bump();
                    if self.chars.peek() == Some(&'>') {
                        self.bump();
                        TokenKind::PipeArrow
                    } else {
                        return Err(Diagnostic::error("expected '>' after '|'", span));
                    }
                }
                '"' => self.string(span)?,
                c if c.is_ascii_digit() || c == '-' => self.number(span)?,
                c if c.is_alphabetic() || c == '_' => self.ident(),
                other => {
                    return Err(Diagnostic::error(
                        format!("unexpected character {other:?}"),
                        span,
                    ))
                }
            };
            tokens.push(Token { kind, span });
        }
    }

    fn punct(&mut self, kind: TokenKind) -> TokenKind {
        self.bump();
        kind
    }

    fn ident(&mut self) -> TokenKind {
        let mut name = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        TokenKind::Ident(name)
    }

    fn number(&mut self, span: Span) -> Result<TokenKind, Diagnostic> {
        let mut raw = String::new();
        if self.chars.peek() == Some(&'-') {
            raw.push('-');
            self.bump();
        }
        let digits = |raw: &mut String, lexer: &mut Lexer| {
            let mut any = false;
            while let Some(&c) = lexer.chars.peek() {
                if c.is_ascii_digit() {
                    raw.push(c);
                    lexer.bump();
                    any = true;
                } else {
                    break;
                }
            }
            any
        };
        if !digits(&mut raw, self) {
            return Err(Diagnostic::error("expected digits in number", span));
        }
        if self.chars.peek() == Some(&'.') {
            raw.push('.');
            self.bump();
            if !digits(&mut raw, self) {
                return Err(Diagnostic::error("expected digits after decimal point", span));
            }
        }
        Ok(TokenKind::Number(raw))
    }

    fn string(&mut self, open: Span) -> Result<TokenKind, Diagnostic> {
        self.bump();
        let mut value = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(Diagnostic::error("unterminated string", open));
            };
            match c {
                '"' => return Ok(TokenKind::Str(value)),
                '\\' => {
                    let escape_at = self.here();
                    match self.bump() {
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some('n') => value.push('\n'),
                        Some('t') => value.push('\t'),
                        Some('r') => value.push('\r'),
                        Some(other) => {
                            return Err(Diagnostic::error(
                                format!("unknown escape '\\{other}'"),
                                escape_at,
                            ))
                        }
                        None => return Err(Diagnostic::error("unterminated string", open)),
                    }
                }
                other => value.push(other),
            }
        }
    }
}

// ---------------------------------------------------------------------
// Parser

const FIELD_KEYS: &[&str] = &["applies_to", "transform", "expect", "repetitions", "aggregate"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let token = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        token
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<Token, Diagnostic> {
        let token = self.peek().clone();
        if &token.kind == kind {
            Ok(self.bump())
        } else {
            Err(Diagnostic::error(
                format!("expected {what}, found {}", token.kind.describe()),
                token.span,
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        let token = self.bump();
        match token.kind {
            TokenKind::Ident(name) => Ok((name, token.span)),
            other => Err(Diagnostic::error(
                format!("expected {what}, found {}", other.describe()),
                token.span,
            )),
        }
    }

    fn document(&mut self) -> Result<MrSpecDoc, Diagnostic> {
        let mut relations: Vec<MrRelationDecl> = Vec::new();
        loop {
            if self.peek().kind == TokenKind::Eof {
                if relations.is_empty() {
                    return Err(Diagnostic::error(
                        "expected at least one relation declaration",
                        self.peek().span,
                    ));
                }
                return Ok(MrSpecDoc { relations });
            }
            let decl = self.relation()?;
            if relations.iter().any(|r| r.id == decl.id) {
                return Err(Diagnostic::error(
                    format!("duplicate relation id {:?}", decl.id),
                    decl.span,
                ));
            }
            relations.push(decl);
        }
    }

    fn relation(&mut self) -> Result<MrRelationDecl, Diagnostic> {
        let (keyword, keyword_span) = self.ident("'relation'")?;
        if keyword != "relation" {
            return Err(Diagnostic::error(
                format!("expected 'relation', found identifier {keyword:?}"),
                keyword_span,
            ));
        }
        let id_token = self.bump();
        let (id, id_span) = match id_token.kind {
            TokenKind::Str(id) => (id, id_token.span),
            other => {
                return Err(Diagnostic::error(
                    format!("expected a quoted relation id, found {}", other.describe()),
                    id_token.span,
                ))
            }
        };
        if id.is_empty() {
            return Err(Diagnostic::error("relation id must be non-empty", id_span));
        }
        self.expect(&TokenKind::LBrace, "'{'")?;
        let mut decl = MrRelationDecl {
            id,
            span: keyword_span,
            applies_to: None,
            transform: None,
            expect: None,
            repetitions: None,
            aggregate: None,
        };
        let mut any_field = false;
        while self.peek().kind != TokenKind::RBrace {
            self.field(&mut decl)?;
            any_field = true;
        }
        if !any_field {
            return Err(Diagnostic::error(
                "relation body must declare at least one field",
                self.peek().span,
            ));
        }
        self.expect(&TokenKind::RBrace, "'}'")?;
        Ok(decl)
    }

    fn field(&mut self, decl: &mut MrRelationDecl) -> Result<(), Diagnostic> {
        let (key, key_span) = self.ident("a field name")?;
        if !FIELD_KEYS.contains(&key.as_str()) {
            return Err(Diagnostic::error(
                format!("unknown field {key:?}; expected one of {}", FIELD_KEYS.join(", ")),
                key_span,
            ));
        }
        self.expect(&TokenKind::Colon, "':'")?;
        let duplicate = match key.as_str() {
            "applies_to" => {
                let value = self.applies_to()?;
                decl.applies_to.replace((value, key_span)).is_some()
            }
            "transform" => {
                let steps = self.pipeline()?;
                decl.transform.replace((steps, key_span)).is_some()
            }
            "expect" => {
                let expect = self.expect_value()?;
                decl.expect.replace((expect, key_span)).is_some()
            }
            "repetitions" => {
                let token = self.bump();
                let TokenKind::Number(raw) = &token.kind else {
                    return Err(Diagnostic::error(
                        format!("expected a repetition count, found {}", token.kind.describe()),
                        token.span,
                    ));
                };
                let count: u64 = raw.parse().map_err(|_| {
                    Diagnostic::error(
                        format!("repetitions must be a non-negative integer, got {raw}"),
                        token.span,
                    )
                })?;
                decl.repetitions.replace((count, key_span)).is_some()
            }
            "aggregate" => {
                let (mode, span) = self.ident("an aggregation mode")?;
                decl.aggregate.replace((mode, span)).is_some()
            }
            _ => unreachable!("key membership checked above"),
        };
        if duplicate {
            return Err(Diagnostic::error(format!("duplicate field {key:?}"), key_span));
        }
        self.expect(&TokenKind::Semi, "';'")?;
        Ok(())
    }

    fn applies_to(&mut self) -> Result<Vec<String>, Diagnostic> {
        let mut tags = vec![self.ident("a task tag or 'any'")?.0];
        while self.peek().kind == TokenKind::Comma {
            self.bump();
            tags.push(self.ident("a task tag")?.0);
        }
        Ok(tags)
    }

    fn pipeline(&mut self) -> Result<Vec<StepDecl>, Diagnostic> {
        let mut steps = vec![self.step()?];
        while self.peek().kind == TokenKind::PipeArrow {
            self.bump();
            steps.push(self.step()?);
        }
        Ok(steps)
    }

    fn step(&mut self) -> Result<StepDecl, Diagnostic> {
        let (name, span) = self.ident("a transform name")?;
        let args = self.kv_args()?;
        Ok(StepDecl { name, args, span })
    }

    fn expect_value(&mut self) -> Result<ExpectDecl, Diagnostic> {
        let (kind, span) = self.ident("an output relation kind")?;
        let args = self.kv_args()?;
        Ok(ExpectDecl { kind, args, span })
    }

    fn kv_args(&mut self) -> Result<Vec<ArgDecl>, Diagnostic> {
        self.expect(&TokenKind::LParen, "'('")?;
        let mut args: Vec<ArgDecl> = Vec::new();
        if self.peek().kind != TokenKind::RParen {
            loop {
                let (key, span) = self.ident("an argument name")?;
                if args.iter().any(|a| a.key == key) {
                    return Err(Diagnostic::error(
                        format!("duplicate argument {key:?}"),
                        span,
                    ));
                }
                self.expect(&TokenKind::Eq, "'='")?;
                let value = self.value()?;
                args.push(ArgDecl { key, value, span });
                if self.peek().kind == TokenKind::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(&TokenKind::RParen, "')'")?;
        Ok(args)
    }

    fn value(&mut self) -> Result<ValueDecl, Diagnostic> {
        let token = self.bump();
        match token.kind {
            TokenKind::Str(value) => Ok(ValueDecl::Str(value)),
            TokenKind::Number(raw) => Ok(ValueDecl::Number(raw)),
            TokenKind::Ident(name) => Ok(ValueDecl::Ident(name)),
            TokenKind::LBrace => {
                let mut entries: Vec<MapEntry> = Vec::new();
                if self.peek().kind != TokenKind::RBrace {
                    loop {
                        let entry_token = self.bump();
                        let (key, span) = match entry_token.kind {
                            TokenKind::Ident(key) => (key, entry_token.span),
                            TokenKind::Str(key) => (key, entry_token.span),
                            other => {
                                return Err(Diagnostic::error(
                                    format!("expected a map key, found {}", other.describe()),
                                    entry_token.span,
                                ))
                            }
                        };
                        if entries.iter().any(|e| e.key == key) {
                            return Err(Diagnostic::error(
                                format!("duplicate map key {key:?}"),
                                span,
                            ));
                        }
                        self.expect(&TokenKind::Colon, "':'")?;
                        let value_token = self.bump();
                        let value = match value_token.kind {
                            TokenKind::Ident(v) => v,
                            TokenKind::Str(v) => v,
                            other => {
                                return Err(Diagnostic::error(
                                    format!("expected a map value, found {}", other.describe()),
                                    value_token.span,
                                ))
                            }
                        };
                        entries.push(MapEntry { key, value, span });
                        if self.peek().kind == TokenKind::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(&TokenKind::RBrace, "'}'")?;
                Ok(ValueDecl::Map(entries))
            }
            other => Err(Diagnostic::error(
                format!("expected a value, found {}", other.describe()),
                token.span,
            )),
        }
    }
}

/// Parses `.mrs` source into a document. Errors come back as positioned
/// diagnostics; no partial document is returned. The parser is total: any
/// byte sequence yields either a document or diagnostics, never a panic.
pub fn parse(source: &str) -> Result<MrSpecDoc, Vec<Diagnostic>> {
    let tokens = Lexer::new(source).lex().map_err(|d| vec![d])?;
    Parser { tokens, pos: 0 }.document().map_err(|d| vec![d])
}

// ---------------------------------------------------------------------
// Validation and lowering

struct Lowered {
    relation: Option<MetamorphicRelation>,
    diagnostics: Vec<Diagnostic>,
}

/// Checks a parsed document against the semantic rules: registry
/// membership, numeric ranges, involutions, aggregation arithmetic.
/// Returns every finding; the document is executable iff no finding is
/// an error.
pub fn validate(doc: &MrSpecDoc) -> Vec<Diagnostic> {
    doc.relations.iter().flat_map(|decl| lower(decl).diagnostics).collect()
}

/// Converts a document into executable relations, failing with the full
/// diagnostic list when validation finds any error.
pub fn to_relations(doc: &MrSpecDoc) -> Result<Vec<MetamorphicRelation>, Vec<Diagnostic>> {
    let mut relations = Vec::new();
    let mut diagnostics = Vec::new();
    for decl in &doc.relations {
        let lowered = lower(decl);
        diagnostics.extend(lowered.diagnostics);
        relations.extend(lowered.relation);
    }
    if no_errors(&diagnostics) {
        Ok(relations)
    } else {
        Err(diagnostics)
    }
}

fn lower(decl: &MrRelationDecl) -> Lowered {
    let mut diags = Vec::new();

    let applies_to = lower_applies_to(decl, &mut diags);
    let pipeline = lower_pipeline(decl, &mut diags);
    let (output_relation, comparator) = lower_expect(decl, &mut diags);

    let repetitions = match decl.repetitions {
        Some((0, span)) => {
            diags.push(Diagnostic::error("repetitions must be at least 1", span));
            1
        }
        Some((n, span)) => {
            if n > u32::MAX as u64 {
                diags.push(Diagnostic::error(format!("repetitions {n} is out of range"), span));
                1
            } else {
                n as u32
            }
        }
        None => 1,
    };
    let aggregation = match &decl.aggregate {
        None => Aggregation::AnyViolation,
        Some((mode, span)) => match canonical_name(mode).as_str() {
            "any-violation" => Aggregation::AnyViolation,
            "majority" => Aggregation::Majority,
            "all" => Aggregation::All,
            other => {
                diags.push(Diagnostic::error(
                    format!(
                        "unknown aggregation {other:?}; expected any_violation, majority, or all"
                    ),
                    *span,
                ));
                Aggregation::AnyViolation
            }
        },
    };
    if aggregation == Aggregation::Majority && repetitions.is_multiple_of(2) {
        let span = decl.aggregate.as_ref().map(|(_, s)| *s).unwrap_or(decl.span);
        diags.push(Diagnostic::error(
            format!("majority aggregation needs an odd repetition count, got {repetitions}"),
            span,
        ));
    }

    let relation = match (applies_to, pipeline, output_relation) {
        (Some(applies_to), Some(transform_pipeline), Some(output_relation))
            if no_errors(&diags) =>
        {
            Some(MetamorphicRelation {
                id: decl.id.clone(),
                name: decl.id.clone(),
                applies_to,
                transform_pipeline,
                output_relation,
                comparator,
                repetitions,
                aggregation,
            })
        }
        _ => None,
    };
    Lowered { relation, diagnostics: diags }
}

fn lower_applies_to(decl: &MrRelationDecl, diags: &mut Vec<Diagnostic>) -> Option<AppliesTo> {
    let Some((tags, span)) = &decl.applies_to else {
        return Some(AppliesTo::Any);
    };
    if tags.iter().any(|t| t == "any") {
        if tags.len() > 1 {
            diags.push(Diagnostic::error("'any' cannot be combined with task tags", *span));
            return None;
        }
        return Some(AppliesTo::Any);
    }
    let mut tasks = std::collections::BTreeSet::new();
    for tag in tags {
        match TaskKind::parse(tag) {
            Ok(task) => {
                tasks.insert(task);
            }
            Err(_) => {
                let known: Vec<&str> = TaskKind::ALL.iter().map(|t| t.tag()).collect();
                diags.push(Diagnostic::error(
                    format!("unknown task tag {tag:?}; expected one of {}", known.join(", ")),
                    *span,
                ));
                return None;
            }
        }
    }
    Some(AppliesTo::Tasks(tasks))
}

fn lower_pipeline(
    decl: &MrRelationDecl,
    diags: &mut Vec<Diagnostic>,
) -> Option<Vec<TransformStep>> {
    let Some((steps, _)) = &decl.transform else {
        diags.push(Diagnostic::error(
            format!("relation {:?} is missing the transform field", decl.id),
            decl.span,
        ));
        return None;
    };
    let mut pipeline = Vec::new();
    for (position, step_decl) in steps.iter().enumerate() {
        let mut step = TransformStep::new(&step_decl.name);
        for arg in &step_decl.args {
            let value = match &arg.value {
                ValueDecl::Str(s) => s.clone(),
                ValueDecl::Number(raw) => raw.clone(),
                ValueDecl::Ident(name) => name.clone(),
                ValueDecl::Map(_) => {
                    diags.push(Diagnostic::error(
                        format!("transform argument {:?} cannot be a map", arg.key),
                        arg.span,
                    ));
                    continue;
                }
            };
            step.parameters.insert(canonical_name(&arg.key), value);
        }
        if let Err(error) = step.validate() {
            diags.push(Diagnostic::error(error.to_string(), step_decl.span));
        }
        if position > 0 && canonical_name(&step_decl.name) == "swap-entities" {
            diags.push(Diagnostic::error(
                "swap-entities must be the first pipeline step",
                step_decl.span,
            ));
        }
        pipeline.push(step);
    }
    Some(pipeline)
}

fn lower_expect(
    decl: &MrRelationDecl,
    diags: &mut Vec<Diagnostic>,
) -> (Option<RelationKind>, ComparatorSpec) {
    let default_comparator = ComparatorSpec::new(ComparatorKind::Exact, 1.0, 0.0);
    let Some((expect, _)) = &decl.expect else {
        diags.push(Diagnostic::error(
            format!("relation {:?} is missing the expect field", decl.id),
            decl.span,
        ));
        return (None, default_comparator);
    };
    match expect.kind.as_str() {
        "equivalent" => {
            let mut comparator = default_comparator;
            for arg in &expect.args {
                match (arg.key.as_str(), &arg.value) {
                    ("comparator", ValueDecl::Ident(name)) => {
                        match ComparatorKind::parse(name) {
                            Ok(kind) => comparator.kind = kind,
                            Err(error) => {
                                diags.push(Diagnostic::error(error.to_string(), arg.span))
                            }
                        }
                    }
                    ("threshold", ValueDecl::Number(raw)) => {
                        comparator.threshold = raw.parse().unwrap_or(f64::NAN);
                    }
                    ("band", ValueDecl::Number(raw)) => {
                        comparator.uncertainty_band = raw.parse().unwrap_or(f64::NAN);
                    }
                    ("comparator" | "threshold" | "band", _) => {
                        diags.push(Diagnostic::error(
                            format!("argument {:?} has the wrong value type", arg.key),
                            arg.span,
                        ));
                    }
                    (other, _) => diags.push(Diagnostic::error(
                        format!(
                            "unknown equivalent() argument {other:?}; expected comparator, threshold, band"
                        ),
                        arg.span,
                    )),
                }
            }
            if comparator.threshold.is_nan() || comparator.uncertainty_band.is_nan() {
                diags.push(Diagnostic::error("malformed numeric argument", expect.span));
            } else if let Err(error) = comparator.validate() {
                diags.push(Diagnostic::error(error.to_string(), expect.span));
            } else if comparator.threshold == 0.0 {
                diags.push(Diagnostic::warning(
                    "threshold 0 makes every output pair equivalent",
                    expect.span,
                ));
            }
            (Some(RelationKind::Equivalence), comparator)
        }
        "flip" => {
            let mut label_map = None;
            let mut label_lexicon = None;
            for arg in &expect.args {
                match (arg.key.as_str(), &arg.value) {
                    ("map", ValueDecl::Map(entries)) => {
                        label_map = Some(entries_to_map(entries));
                    }
                    ("lexicon", ValueDecl::Map(entries)) => {
                        label_lexicon = Some(entries_to_map(entries));
                    }
                    ("map" | "lexicon", _) => diags.push(Diagnostic::error(
                        format!("argument {:?} must be a map literal", arg.key),
                        arg.span,
                    )),
                    (other, _) => diags.push(Diagnostic::error(
                        format!("unknown flip() argument {other:?}; expected map, lexicon"),
                        arg.span,
                    )),
                }
            }
            let (Some(label_map), Some(label_lexicon)) = (label_map, label_lexicon) else {
                diags.push(Diagnostic::error(
                    "flip() requires both map = {…} and lexicon = {…}",
                    expect.span,
                ));
                return (None, default_comparator);
            };
            let relation = RelationKind::Flip { label_map, label_lexicon };
            if let Err(error) = relation.validate() {
                diags.push(Diagnostic::error(error.to_string(), expect.span));
            }
            (Some(relation), default_comparator)
        }
        "external" => {
            let mut command = None;
            for arg in &expect.args {
                match (arg.key.as_str(), &arg.value) {
                    ("command", ValueDecl::Str(text)) => command = Some(text.clone()),
                    ("command", _) => diags.push(Diagnostic::error(
                        "argument \"command\" must be a string",
                        arg.span,
                    )),
                    (other, _) => diags.push(Diagnostic::error(
                        format!("unknown external() argument {other:?}; expected command"),
                        arg.span,
                    )),
                }
            }
            let Some(command) = command else {
                diags.push(Diagnostic::error(
                    "external() requires command = \"…\"",
                    expect.span,
                ));
                return (None, default_comparator);
            };
            let relation = RelationKind::ExternalCheck { command };
            if let Err(error) = relation.validate() {
                diags.push(Diagnostic::error(error.to_string(), expect.span));
            }
            (Some(relation), default_comparator)
        }
        other => {
            diags.push(Diagnostic::error(
                format!("unknown expect kind {other:?}; expected equivalent, flip, or external"),
                expect.span,
            ));
            (None, default_comparator)
        }
    }
}

fn entries_to_map(entries: &[MapEntry]) -> BTreeMap<String, String> {
    entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect()
}

// ---------------------------------------------------------------------
// Canonical serialization

/// Renders relations in canonical form: fixed field order, every field
/// explicit, sorted argument and map keys, snake_case identifiers,
/// 2-space indentation, one blank line between relations. The run config
/// hash is taken over this text, so formatting is part of the contract.
pub fn serialize_relations(relations: &[MetamorphicRelation]) -> String {
    let mut out = String::new();
    for (index, mr) in relations.iter().enumerate() {
        if index > 0 {
            out.push('\n');
        }
        out.push_str(&format!("relation {} {{\n", quote(&mr.id)));
        let applies = match &mr.applies_to {
            AppliesTo::Any => "any".to_string(),
            AppliesTo::Tasks(tasks) => tasks
                .iter()
                .map(|t| surface(t.tag()))
                .collect::<Vec<_>>()
                .join(", "),
        };
        out.push_str(&format!("  applies_to: {applies};\n"));
        let pipeline = mr
            .transform_pipeline
            .iter()
            .map(|step| {
                let args = step
                    .parameters
                    .iter()
                    .map(|(k, v)| format!("{} = {}", surface(k), emit_value(v)))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("{}({args})", surface(&step.name))
            })
            .collect::<Vec<_>>()
            .join(" |> ");
        out.push_str(&format!("  transform: {pipeline};\n"));
        let expect = match &mr.output_relation {
            RelationKind::Equivalence => format!(
                "equivalent(band = {}, comparator = {}, threshold = {})",
                emit_number(mr.comparator.uncertainty_band),
                surface(mr.comparator.kind.tag()),
                emit_number(mr.comparator.threshold),
            ),
            RelationKind::Flip { label_map, label_lexicon } => format!(
                "flip(lexicon = {}, map = {})",
                emit_map(label_lexicon),
                emit_map(label_map)
            ),
            RelationKind::ExternalCheck { command } => {
                format!("external(command = {})", quote(command))
            }
        };
        out.push_str(&format!("  expect: {expect};\n"));
        out.push_str(&format!("  repetitions: {};\n", mr.repetitions));
        out.push_str(&format!("  aggregate: {};\n", surface(mr.aggregation.name())));
        out.push_str("}\n");
    }
    out
}

/// Validates and canonically serializes a parsed document.
pub fn serialize(doc: &MrSpecDoc) -> Result<String, Vec<Diagnostic>> {
    Ok(serialize_relations(&to_relations(doc)?))
}

fn surface(name: &str) -> String {
    name.replace('-', "_")
}

fn is_bare_number(text: &str) -> bool {
    let digits = text.strip_prefix('-').unwrap_or(text);
    match digits.split_once('.') {
        Some((int, frac)) => {
            !int.is_empty()
                && !frac.is_empty()
                && int.chars().all(|c| c.is_ascii_digit())
                && frac.chars().all(|c| c.is_ascii_digit())
        }
        None => !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()),
    }
}

fn is_bare_ident(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

fn emit_value(value: &str) -> String {
    if is_bare_number(value) || is_bare_ident(value) {
        value.to_string()
    } else {
        quote(value)
    }
}

fn emit_number(value: f64) -> String {
    format!("{value}")
}

fn emit_map(map: &BTreeMap<String, String>) -> String {
    let entries = map
        .iter()
        .map(|(k, v)| {
            let key = if is_bare_ident(k) { k.clone() } else { quote(k) };
            let value = if is_bare_ident(v) { v.clone() } else { quote(v) };
            format!("{key}: {value}")
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("{{{entries}}}")
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}
