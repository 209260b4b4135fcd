//! Natural-language rendering of EL concepts from entity labels.
//!
//! ```text
//! V(A)      = label(A)            V(⊤) = "thing"     V(⊥) = "nothing"
//! V(C ⊓ D)  = "V(C) and V(D)"
//! V(∃r.C)   = "something that V(r) some V(C)"
//! ```
//!
//! Fresh names from normalization are rendered through their definitions.
//! Label casing is kept as written in the label file.

use thiserror::Error;

use crate::normalize::DefinitionMap;
use crate::ontology::{Concept, Iri, LabelMap};

pub const TOP_TEXT: &str = "thing";
pub const BOTTOM_TEXT: &str = "nothing";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerbalizeError {
    #[error("no label for concept {0}")]
    MissingConceptLabel(Iri),
    #[error("no label for role {0}")]
    MissingRoleLabel(Iri),
    #[error("definition cycle through {0}")]
    CyclicDefinition(Iri),
}

pub fn verbalize_role(r: &Iri, labels: &LabelMap) -> Result<String, VerbalizeError> {
    labels
        .role(r)
        .map(str::to_string)
        .ok_or_else(|| VerbalizeError::MissingRoleLabel(r.clone()))
}

pub fn verbalize(c: &Concept, labels: &LabelMap, defs: &DefinitionMap) -> Result<String, VerbalizeError> {
    let mut out = String::new();
    let mut stack = Vec::new();
    render(c, labels, defs, &mut stack, &mut out)?;
    Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
}

fn render(
    c: &Concept,
    labels: &LabelMap,
    defs: &DefinitionMap,
    stack: &mut Vec<Iri>,
    out: &mut String,
) -> Result<(), VerbalizeError> {
    match c {
        Concept::Top => out.push_str(TOP_TEXT),
        Concept::Bottom => out.push_str(BOTTOM_TEXT),
        Concept::Atomic(iri) | Concept::Nominal(iri) => {
            if let Some(label) = labels.concept(iri) {
                out.push_str(label);
            } else if let Some(def) = defs.get(iri) {
                if stack.contains(iri) {
                    return Err(VerbalizeError::CyclicDefinition(iri.clone()));
                }
                stack.push(iri.clone());
                render(def, labels, defs, stack, out)?;
                stack.pop();
            } else {
                return Err(VerbalizeError::MissingConceptLabel(iri.clone()));
            }
        }
        Concept::Conjunction(l, r) => {
            render(l, labels, defs, stack, out)?;
            out.push_str(" and ");
            render(r, labels, defs, stack, out)?;
        }
        Concept::Existential { role, filler } => {
            out.push_str("something that ");
            out.push_str(&verbalize_role(role, labels)?);
            out.push_str(" some ");
            render(filler, labels, defs, stack, out)?;
        }
    }
    Ok(())
}
