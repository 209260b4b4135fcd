//! Rewriting of arbitrary EL axioms into the four normal forms
//!
//! ```text
//! NF1: A ⊑ B    NF2: A1 ⊓ A2 ⊑ B    NF3: A ⊑ ∃r.B    NF4: ∃r.B ⊑ A
//! ```
//!
//! Complex subconcepts are replaced bottom-up by fresh names `_N1, _N2, ...`.
//! A name is allocated after the names of its own operands, walking each
//! axiom left side first, operands left to right. Structurally identical
//! subconcepts share one name. Every fresh name `N ≡ C` contributes both
//! directions `N ⊑ C` and `C ⊑ N` in normal form, and `C` is recorded in the
//! [`DefinitionMap`] with its operands already replaced by atoms.
//!
//! Nominals `{a}` are rewritten to the atomic concept `a` before anything
//! else happens.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{parse_axiom_line, parse_concept, Axiom, Concept, Iri, Ontology, ParseError};

/// A concept allowed in a normalized position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    Top,
    Bottom,
    Named(Iri),
}

impl Atom {
    pub fn named(iri: &str) -> Atom {
        Atom::Named(Iri::new(iri).expect("valid IRI"))
    }

    pub fn to_concept(&self) -> Concept {
        match self {
            Atom::Top => Concept::Top,
            Atom::Bottom => Concept::Bottom,
            Atom::Named(iri) => Concept::Atomic(iri.clone()),
        }
    }

    pub fn from_concept(c: &Concept) -> Option<Atom> {
        match c {
            Concept::Top => Some(Atom::Top),
            Concept::Bottom => Some(Atom::Bottom),
            Concept::Atomic(iri) | Concept::Nominal(iri) => Some(Atom::Named(iri.clone())),
            _ => None,
        }
    }

    pub fn iri(&self) -> Option<&Iri> {
        match self {
            Atom::Named(iri) => Some(iri),
            _ => None,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_concept().fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NfKind {
    Nf1,
    Nf2,
    Nf3,
    Nf4,
}

impl NfKind {
    pub const ALL: [NfKind; 4] = [NfKind::Nf1, NfKind::Nf2, NfKind::Nf3, NfKind::Nf4];
}

impl fmt::Display for NfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NfKind::Nf1 => "NF1",
            NfKind::Nf2 => "NF2",
            NfKind::Nf3 => "NF3",
            NfKind::Nf4 => "NF4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NormalizedAxiom {
    /// `sub ⊑ sup`
    Nf1 { sub: Atom, sup: Atom },
    /// `left ⊓ right ⊑ sup`
    Nf2 { left: Atom, right: Atom, sup: Atom },
    /// `sub ⊑ ∃role.filler`
    Nf3 { sub: Atom, role: Iri, filler: Atom },
    /// `∃role.filler ⊑ sup`
    Nf4 { role: Iri, filler: Atom, sup: Atom },
}

impl NormalizedAxiom {
    pub fn nf1(sub: Atom, sup: Atom) -> Self {
        NormalizedAxiom::Nf1 { sub, sup }
    }

    pub fn kind(&self) -> NfKind {
        match self {
            NormalizedAxiom::Nf1 { .. } => NfKind::Nf1,
            NormalizedAxiom::Nf2 { .. } => NfKind::Nf2,
            NormalizedAxiom::Nf3 { .. } => NfKind::Nf3,
            NormalizedAxiom::Nf4 { .. } => NfKind::Nf4,
        }
    }

    pub fn to_axiom(&self) -> Axiom {
        match self {
            NormalizedAxiom::Nf1 { sub, sup } => Axiom::new(sub.to_concept(), sup.to_concept()),
            NormalizedAxiom::Nf2 { left, right, sup } => Axiom::new(
                Concept::and(left.to_concept(), right.to_concept()),
                sup.to_concept(),
            ),
            NormalizedAxiom::Nf3 { sub, role, filler } => Axiom::new(
                sub.to_concept(),
                Concept::Existential {
                    role: role.clone(),
                    filler: Box::new(filler.to_concept()),
                },
            ),
            NormalizedAxiom::Nf4 { role, filler, sup } => Axiom::new(
                Concept::Existential {
                    role: role.clone(),
                    filler: Box::new(filler.to_concept()),
                },
                sup.to_concept(),
            ),
        }
    }

    /// Classifies an axiom that is already in one of the normal forms.
    pub fn from_axiom(ax: &Axiom) -> Option<NormalizedAxiom> {
        let atom = Atom::from_concept;
        let exists = |c: &Concept| match c {
            Concept::Existential { role, filler } => atom(filler).map(|f| (role.clone(), f)),
            _ => None,
        };
        if let (Some(sub), Some(sup)) = (atom(&ax.sub), atom(&ax.sup)) {
            return Some(NormalizedAxiom::Nf1 { sub, sup });
        }
        if let Some(sup) = atom(&ax.sup) {
            if let Concept::Conjunction(l, r) = &ax.sub {
                if let (Some(left), Some(right)) = (atom(l), atom(r)) {
                    return Some(NormalizedAxiom::Nf2 { left, right, sup });
                }
            }
            if let Some((role, filler)) = exists(&ax.sub) {
                return Some(NormalizedAxiom::Nf4 { role, filler, sup });
            }
            return None;
        }
        if let Some(sub) = atom(&ax.sub) {
            if let Some((role, filler)) = exists(&ax.sup) {
                return Some(NormalizedAxiom::Nf3 { sub, role, filler });
            }
        }
        None
    }

    /// Atoms in concept positions, left to right.
    pub fn atoms(&self) -> Vec<&Atom> {
        match self {
            NormalizedAxiom::Nf1 { sub, sup } => vec![sub, sup],
            NormalizedAxiom::Nf2 { left, right, sup } => vec![left, right, sup],
            NormalizedAxiom::Nf3 { sub, filler, .. } => vec![sub, filler],
            NormalizedAxiom::Nf4 { filler, sup, .. } => vec![filler, sup],
        }
    }

    pub fn role(&self) -> Option<&Iri> {
        match self {
            NormalizedAxiom::Nf3 { role, .. } | NormalizedAxiom::Nf4 { role, .. } => Some(role),
            _ => None,
        }
    }
}

impl fmt::Display for NormalizedAxiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_axiom().fmt(f)
    }
}

pub fn axiom_nf_kind(a: &NormalizedAxiom) -> NfKind {
    a.kind()
}

/// Fresh name → the complex concept it abbreviates.
pub type DefinitionMap = IndexMap<Iri, Concept>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizedFileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: axiom is not in normal form: {axiom}")]
    NotNormalized { line: usize, axiom: String },
    #[error("line {line}: expected `IRI<TAB>concept-expression`")]
    MalformedDefinition { line: usize },
}

/// Parses a file of axioms that must already be in normal form.
pub fn parse_normalized(source: &str) -> Result<Vec<NormalizedAxiom>, NormalizedFileError> {
    let mut out = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let ax = parse_axiom_line(raw, idx + 1)?;
        let nf = NormalizedAxiom::from_axiom(&ax).ok_or(NormalizedFileError::NotNormalized {
            line: idx + 1,
            axiom: ax.to_string(),
        })?;
        out.push(nf);
    }
    Ok(out)
}

pub fn write_normalized(axioms: &[NormalizedAxiom]) -> String {
    let mut out = String::new();
    for ax in axioms {
        out.push_str(&ax.to_string());
        out.push('\n');
    }
    out
}

/// `freshIRI<TAB>concept-expression` lines.
pub fn write_definitions(defs: &DefinitionMap) -> String {
    let mut out = String::new();
    for (iri, c) in defs {
        out.push_str(&format!("{iri}\t{c}\n"));
    }
    out
}

pub fn parse_definitions(source: &str) -> Result<DefinitionMap, NormalizedFileError> {
    let mut defs = DefinitionMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let (iri, expr) = raw
            .split_once('\t')
            .ok_or(NormalizedFileError::MalformedDefinition { line })?;
        let iri = Iri::new(iri.trim()).map_err(|_| NormalizedFileError::MalformedDefinition { line })?;
        let concept = parse_concept(expr.trim()).map_err(|e| match e {
            ParseError::Syntax { message, .. } => ParseError::Syntax { line, message },
            ParseError::Unbalanced { .. } => ParseError::Unbalanced { line },
            other => other,
        })?;
        defs.insert(iri, concept);
    }
    Ok(defs)
}

/// Controls how fresh names are numbered.
#[derive(Debug, Clone, Default)]
pub struct NormalizeOptions {
    /// When set, input axioms are visited in a seeded random order instead of
    /// file order. The result is the same up to renaming of fresh concepts.
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Normalized {
    pub axioms: Vec<NormalizedAxiom>,
    pub definitions: DefinitionMap,
}

impl Normalized {
    /// Fresh definitions whose name never occurs in `axioms` are kept; they
    /// cost nothing and keep verbalization total.
    pub fn fresh_names(&self) -> impl Iterator<Item = &Iri> {
        self.definitions.keys()
    }
}

pub fn normalize(o: &Ontology) -> Normalized {
    normalize_with(o, &NormalizeOptions::default())
}

pub fn normalize_with(o: &Ontology, opts: &NormalizeOptions) -> Normalized {
    let mut order: Vec<usize> = (0..o.len()).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut n = Normalizer {
        reserved: o.concept_names().clone(),
        counter: 0,
        names: IndexMap::new(),
        definitions: DefinitionMap::new(),
        out: IndexSet::new(),
    };
    for i in order {
        let ax = &o.axioms()[i];
        let sub = denominalize(&ax.sub);
        let sup = denominalize(&ax.sup);
        let mut pending = Vec::new();
        n.axiom(&sub, &sup, &mut pending);
        // the axiom's own normal forms come before the definitions it created
        let (own, defs): (Vec<_>, Vec<_>) = pending.into_iter().partition(|(own, _)| *own);
        for (_, nf) in own.into_iter().chain(defs) {
            n.out.insert(nf);
        }
    }
    Normalized {
        axioms: n.out.into_iter().collect(),
        definitions: n.definitions,
    }
}

fn denominalize(c: &Concept) -> Concept {
    match c {
        Concept::Nominal(iri) => Concept::Atomic(iri.clone()),
        Concept::Conjunction(l, r) => Concept::and(denominalize(l), denominalize(r)),
        Concept::Existential { role, filler } => Concept::Existential {
            role: role.clone(),
            filler: Box::new(denominalize(filler)),
        },
        other => other.clone(),
    }
}

struct Normalizer {
    reserved: BTreeSet<Iri>,
    counter: usize,
    names: IndexMap<Concept, Iri>,
    definitions: DefinitionMap,
    out: IndexSet<NormalizedAxiom>,
}

/// (belongs to the axiom being rewritten, normal form)
type Pending = Vec<(bool, NormalizedAxiom)>;

impl Normalizer {
    fn fresh(&mut self) -> Iri {
        loop {
            self.counter += 1;
            let iri = Iri::new(format!("_N{}", self.counter)).expect("valid IRI");
            if !self.reserved.contains(&iri) {
                return iri;
            }
        }
    }

    /// Returns an atom standing for `c`, allocating fresh names bottom-up.
    fn name(&mut self, c: &Concept, pending: &mut Pending) -> Atom {
        if let Some(atom) = Atom::from_concept(c) {
            return atom;
        }
        if let Some(iri) = self.names.get(c) {
            return Atom::Named(iri.clone());
        }
        let (shallow, forward, backward) = match c {
            Concept::Conjunction(l, r) => {
                let left = self.name(l, pending);
                let right = self.name(r, pending);
                let shallow = Concept::and(left.to_concept(), right.to_concept());
                (shallow, Some((left, right)), None)
            }
            Concept::Existential { role, filler } => {
                let filler = self.name(filler, pending);
                let shallow = Concept::Existential {
                    role: role.clone(),
                    filler: Box::new(filler.to_concept()),
                };
                (shallow, None, Some((role.clone(), filler)))
            }
            _ => unreachable!("atomic handled above"),
        };
        let iri = self.fresh();
        let n = Atom::Named(iri.clone());
        if let Some((left, right)) = forward {
            pending.push((
                false,
                NormalizedAxiom::Nf2 {
                    left: left.clone(),
                    right: right.clone(),
                    sup: n.clone(),
                },
            ));
            pending.push((false, NormalizedAxiom::nf1(n.clone(), left)));
            pending.push((false, NormalizedAxiom::nf1(n.clone(), right)));
        }
        if let Some((role, filler)) = backward {
            pending.push((
                false,
                NormalizedAxiom::Nf3 {
                    sub: n.clone(),
                    role: role.clone(),
                    filler: filler.clone(),
                },
            ));
            pending.push((
                false,
                NormalizedAxiom::Nf4 {
                    role,
                    filler,
                    sup: n.clone(),
                },
            ));
        }
        self.names.insert(c.clone(), iri.clone());
        self.definitions.insert(iri, shallow);
        n
    }

    fn axiom(&mut self, sub: &Concept, sup: &Concept, pending: &mut Pending) {
        // a conjunction on the right splits before anything gets named
        if let Concept::Conjunction(l, r) = sup {
            self.axiom(sub, l, pending);
            self.axiom(sub, r, pending);
            return;
        }
        if let Some(sup_atom) = Atom::from_concept(sup) {
            let nf = match sub {
                Concept::Conjunction(l, r) => {
                    let left = self.name(l, pending);
                    let right = self.name(r, pending);
                    NormalizedAxiom::Nf2 {
                        left,
                        right,
                        sup: sup_atom,
                    }
                }
                Concept::Existential { role, filler } => NormalizedAxiom::Nf4 {
                    role: role.clone(),
                    filler: self.name(filler, pending),
                    sup: sup_atom,
                },
                atomic => NormalizedAxiom::nf1(
                    Atom::from_concept(atomic).expect("atomic"),
                    sup_atom,
                ),
            };
            pending.push((true, nf));
            return;
        }
        let Concept::Existential { role, filler } = sup else {
            unreachable!("conjunction and atoms handled above")
        };
        let sub_atom = self.name(sub, pending);
        let filler = self.name(filler, pending);
        pending.push((
            true,
            NormalizedAxiom::Nf3 {
                sub: sub_atom,
                role: role.clone(),
                filler,
            },
        ));
    }
}
