//! EL concept model, a functional-syntax subset parser and the label table.
//!
//! Supported axiom lines:
//!
//! ```text
//! SubClassOf(SUB SUP)
//! ```
//!
//! where a concept expression is one of `owl:Thing`, `owl:Nothing`, a bare
//! IRI, `ObjectIntersectionOf(C D ...)`, `ObjectSomeValuesFrom(r C)` or
//! `ObjectOneOf(a)`. Lines starting with `#` and blank lines are skipped.
//! N-ary intersections are left-folded into binary conjunctions.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OWL_THING: &str = "owl:Thing";
pub const OWL_NOTHING: &str = "owl:Nothing";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unbalanced parentheses")]
    Unbalanced { line: usize },
    #[error("invalid IRI {0:?}")]
    InvalidIri(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("line {line}: expected `IRI<TAB>kind<TAB>label`, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("line {line}: unknown label kind {kind:?} (expected `concept` or `role`)")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: empty label for {iri}")]
    EmptyLabel { line: usize, iri: String },
    #[error("line {line}: {source}")]
    Iri {
        line: usize,
        #[source]
        source: ParseError,
    },
}

/// Opaque entity identifier. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, ParseError> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) || value.contains(['(', ')'])
        {
            return Err(ParseError::InvalidIri(value));
        }
        Ok(Iri(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Iri {
    type Error = ParseError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Iri::new(value)
    }
}

impl From<Iri> for String {
    fn from(iri: Iri) -> String {
        iri.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An EL concept expression. Conjunctions are binary and keep parse order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Concept {
    Top,
    Bottom,
    Atomic(Iri),
    Nominal(Iri),
    Conjunction(Box<Concept>, Box<Concept>),
    Existential { role: Iri, filler: Box<Concept> },
}

impl Concept {
    pub fn atomic(iri: &str) -> Concept {
        Concept::Atomic(Iri::new(iri).expect("valid IRI"))
    }

    pub fn and(left: Concept, right: Concept) -> Concept {
        Concept::Conjunction(Box::new(left), Box::new(right))
    }

    pub fn some(role: &str, filler: Concept) -> Concept {
        Concept::Existential {
            role: Iri::new(role).expect("valid IRI"),
            filler: Box::new(filler),
        }
    }

    /// True for ⊤, ⊥, named concepts and nominals.
    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Concept::Top | Concept::Bottom | Concept::Atomic(_) | Concept::Nominal(_)
        )
    }

    pub fn depth(&self) -> usize {
        match self {
            Concept::Conjunction(l, r) => 1 + l.depth().max(r.depth()),
            Concept::Existential { filler, .. } => 1 + filler.depth(),
            _ => 0,
        }
    }

    /// Visits every subtree in pre-order, left to right.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Concept)) {
        visit(self);
        match self {
            Concept::Conjunction(l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Concept::Existential { filler, .. } => filler.walk(visit),
            _ => {}
        }
    }

    fn collect_signature(&self, concepts: &mut BTreeSet<Iri>, roles: &mut BTreeSet<Iri>) {
        self.walk(&mut |c| match c {
            Concept::Atomic(iri) | Concept::Nominal(iri) => {
                concepts.insert(iri.clone());
            }
            Concept::Existential { role, .. } => {
                roles.insert(role.clone());
            }
            _ => {}
        });
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Concept::Top => f.write_str(OWL_THING),
            Concept::Bottom => f.write_str(OWL_NOTHING),
            Concept::Atomic(iri) => write!(f, "{iri}"),
            Concept::Nominal(iri) => write!(f, "ObjectOneOf({iri})"),
            Concept::Conjunction(l, r) => write!(f, "ObjectIntersectionOf({l} {r})"),
            Concept::Existential { role, filler } => {
                write!(f, "ObjectSomeValuesFrom({role} {filler})")
            }
        }
    }
}

/// `sub ⊑ sup`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Axiom {
    pub sub: Concept,
    pub sup: Concept,
}

impl Axiom {
    pub fn new(sub: Concept, sup: Concept) -> Self {
        Axiom { sub, sup }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubClassOf({} {})", self.sub, self.sup)
    }
}

/// An ordered list of TBox axioms with its signature.
///
/// Nominal individuals are counted as atomic concepts in the signature, since
/// the rest of the pipeline treats `{a}` as a concept named `a`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ontology {
    axioms: Vec<Axiom>,
    concepts: BTreeSet<Iri>,
    roles: BTreeSet<Iri>,
}

impl Ontology {
    pub fn new(axioms: Vec<Axiom>) -> Self {
        let mut concepts = BTreeSet::new();
        let mut roles = BTreeSet::new();
        for ax in &axioms {
            ax.sub.collect_signature(&mut concepts, &mut roles);
            ax.sup.collect_signature(&mut concepts, &mut roles);
        }
        Ontology {
            axioms,
            concepts,
            roles,
        }
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    pub fn concept_names(&self) -> &BTreeSet<Iri> {
        &self.concepts
    }

    pub fn role_names(&self) -> &BTreeSet<Iri> {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    /// One axiom per line, in the same syntax accepted by [`parse_ontology`].
    pub fn to_functional(&self) -> String {
        let mut out = String::new();
        for ax in &self.axioms {
            out.push_str(&ax.to_string());
            out.push('\n');
        }
        out
    }
}

/// Concept and role labels, keyed by IRI.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub concept_labels: IndexMap<Iri, String>,
    pub role_labels: IndexMap<Iri, String>,
}

impl LabelMap {
    pub fn is_empty(&self) -> bool {
        self.concept_labels.is_empty() && self.role_labels.is_empty()
    }

    pub fn concept(&self, iri: &Iri) -> Option<&str> {
        self.concept_labels.get(iri).map(String::as_str)
    }

    pub fn role(&self, iri: &Iri) -> Option<&str> {
        self.role_labels.get(iri).map(String::as_str)
    }

    pub fn insert_concept(&mut self, iri: Iri, label: impl Into<String>) {
        self.concept_labels.insert(iri, label.into());
    }

    pub fn insert_role(&mut self, iri: Iri, label: impl Into<String>) {
        self.role_labels.insert(iri, label.into());
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (iri, label) in &self.concept_labels {
            out.push_str(&format!("{iri}\tconcept\t{label}\n"));
        }
        for (iri, label) in &self.role_labels {
            out.push_str(&format!("{iri}\trole\t{label}\n"));
        }
        out
    }
}

/// Loads `IRI<TAB>kind<TAB>label` lines. Blank lines and `#` comments are
/// skipped; a later entry for the same IRI replaces the earlier one.
pub fn load_labels(source: &str) -> Result<LabelMap, LabelError> {
    let mut map = LabelMap::default();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(LabelError::Malformed {
                line,
                content: raw.to_string(),
            });
        }
        let iri = Iri::new(fields[0].trim()).map_err(|source| LabelError::Iri { line, source })?;
        let label = fields[2].trim();
        if label.is_empty() {
            return Err(LabelError::EmptyLabel {
                line,
                iri: iri.to_string(),
            });
        }
        match fields[1].trim() {
            "concept" => map.insert_concept(iri, label),
            "role" => map.insert_role(iri, label),
            other => {
                return Err(LabelError::UnknownKind {
                    line,
                    kind: other.to_string(),
                })
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Word(&'a str),
}

fn lex(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        let delimiter = ch == '(' || ch == ')' || ch.is_whitespace();
        if delimiter {
            if let Some(s) = start.take() {
                tokens.push(Token::Word(&text[s..i]));
            }
            match ch {
                '(' => tokens.push(Token::Open),
                ')' => tokens.push(Token::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token::Word(&text[s..]));
    }
    tokens
}

fn check_balance(tokens: &[Token<'_>], line: usize) -> Result<(), ParseError> {
    let mut depth: i64 = 0;
    for t in tokens {
        match t {
            Token::Open => depth += 1,
            Token::Close => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseError::Unbalanced { line });
                }
            }
            Token::Word(_) => {}
        }
    }
    if depth != 0 {
        return Err(ParseError::Unbalanced { line });
    }
    Ok(())
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, line: usize) -> Result<Self, ParseError> {
        let tokens = lex(text);
        check_balance(&tokens, line)?;
        Ok(Parser {
            tokens,
            pos: 0,
            line,
        })
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_open(&mut self, after: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Token::Open) => Ok(()),
            _ => Err(self.error(format!("expected `(` after {after}"))),
        }
    }

    fn expect_close(&mut self, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Token::Close) => Ok(()),
            Some(Token::Word(w)) => Err(self.error(format!("unexpected `{w}` in {what}"))),
            _ => Err(self.error(format!("expected `)` to close {what}"))),
        }
    }

    fn iri(&mut self, what: &str) -> Result<Iri, ParseError> {
        match self.next() {
            Some(Token::Word(w)) if !is_keyword(w) => {
                Iri::new(w).map_err(|_| self.error(format!("invalid IRI `{w}`")))
            }
            Some(Token::Word(w)) => Err(self.error(format!("expected {what}, found `{w}`"))),
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn axiom(&mut self) -> Result<Axiom, ParseError> {
        match self.next() {
            Some(Token::Word("SubClassOf")) => {}
            Some(Token::Word(w)) => {
                return Err(self.error(format!("unsupported axiom `{w}`")));
            }
            _ => return Err(self.error("expected `SubClassOf(`")),
        }
        self.expect_open("SubClassOf")?;
        let sub = self.concept()?;
        let sup = self.concept()?;
        self.expect_close("SubClassOf")?;
        Ok(Axiom::new(sub, sup))
    }

    fn concept(&mut self) -> Result<Concept, ParseError> {
        let word = match self.next() {
            Some(Token::Word(w)) => w,
            Some(Token::Close) => return Err(self.error("missing concept expression")),
            Some(Token::Open) => return Err(self.error("unexpected `(`")),
            None => return Err(self.error("unexpected end of expression")),
        };
        match word {
            OWL_THING => Ok(Concept::Top),
            OWL_NOTHING => Ok(Concept::Bottom),
            "ObjectIntersectionOf" => {
                self.expect_open(word)?;
                let mut acc = self.concept()?;
                let mut operands = 1;
                while !matches!(self.peek(), Some(Token::Close) | None) {
                    let next = self.concept()?;
                    acc = Concept::and(acc, next);
                    operands += 1;
                }
                if operands < 2 {
                    return Err(self.error("ObjectIntersectionOf needs at least two operands"));
                }
                self.expect_close(word)?;
                Ok(acc)
            }
            "ObjectSomeValuesFrom" => {
                self.expect_open(word)?;
                let role = self.iri("role IRI")?;
                let filler = self.concept()?;
                self.expect_close(word)?;
                Ok(Concept::Existential {
                    role,
                    filler: Box::new(filler),
                })
            }
            "ObjectOneOf" => {
                self.expect_open(word)?;
                let individual = self.iri("individual IRI")?;
                self.expect_close(word)?;
                Ok(Concept::Nominal(individual))
            }
            "SubClassOf" => Err(self.error("nested SubClassOf")),
            w => {
                if matches!(self.peek(), Some(Token::Open)) {
                    return Err(self.error(format!("unsupported constructor `{w}`")));
                }
                Iri::new(w)
                    .map(Concept::Atomic)
                    .map_err(|_| self.error(format!("invalid IRI `{w}`")))
            }
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(Token::Word(w)) => Err(self.error(format!("trailing input `{w}`"))),
            Some(_) => Err(self.error("trailing input")),
        }
    }
}

fn is_keyword(w: &str) -> bool {
    matches!(
        w,
        "SubClassOf" | "ObjectIntersectionOf" | "ObjectSomeValuesFrom" | "ObjectOneOf"
    ) || w == OWL_THING
        || w == OWL_NOTHING
}

fn is_skipped(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn parse_axiom_line(text: &str, line: usize) -> Result<Axiom, ParseError> {
    let mut p = Parser::new(text, line)?;
    let ax = p.axiom()?;
    p.finish()?;
    Ok(ax)
}

/// Parses one axiom per line.
pub fn parse_ontology(source: &str) -> Result<Ontology, ParseError> {
    let mut axioms = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        if is_skipped(raw) {
            continue;
        }
        axioms.push(parse_axiom_line(raw, idx + 1)?);
    }
    Ok(Ontology::new(axioms))
}

/// Parses a single concept expression.
pub fn parse_concept(source: &str) -> Result<Concept, ParseError> {
    let mut p = Parser::new(source, 1)?;
    let c = p.concept()?;
    p.finish()?;
    Ok(c)
}

/// Existential and conjunction subexpressions of an ontology.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Subexpressions {
    /// Every distinct `∃r.D` subtree, in first-occurrence order.
    pub existentials: IndexSet<Concept>,
    /// Every distinct `C ⊓ D` subtree, in first-occurrence order.
    pub conjunctions: IndexSet<Concept>,
}

pub fn collect_subexpressions(o: &Ontology) -> Subexpressions {
    let mut out = Subexpressions::default();
    for ax in o.axioms() {
        for side in [&ax.sub, &ax.sup] {
            side.walk(&mut |c| match c {
                Concept::Existential { .. } => {
                    out.existentials.insert(c.clone());
                }
                Concept::Conjunction(..) => {
                    out.conjunctions.insert(c.clone());
                }
                _ => {}
            });
        }
    }
    out
}
