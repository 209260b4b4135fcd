//! Completion-rule saturation for normalized EL ontologies.
//!
//! Computes the least sets `S(A)` and `R(r)` closed under
//!
//! ```text
//! init  A ∈ S(A), ⊤ ∈ S(A)
//! R1    A' ∈ S(A), A' ⊑ B                       ⇒ B ∈ S(A)
//! R2    A1, A2 ∈ S(A), A1 ⊓ A2 ⊑ B               ⇒ B ∈ S(A)
//! R3    A' ∈ S(A), A' ⊑ ∃r.B                     ⇒ (A, B) ∈ R(r)
//! R4    (A, B) ∈ R(r), B' ∈ S(B), ∃r.B' ⊑ A'     ⇒ A' ∈ S(A)
//! ```
//!
//! `⊥` has no dedicated rule and behaves like any other atom.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::normalize::{Atom, NormalizedAxiom};
use crate::ontology::Iri;

/// The saturated closure. Atoms are interned in sorted order.
#[derive(Debug, Clone)]
pub struct Closure {
    atoms: Vec<Atom>,
    index: BTreeMap<Atom, usize>,
    subsumers: Vec<BTreeSet<usize>>,
    links: BTreeMap<Iri, BTreeSet<(usize, usize)>>,
}

impl Closure {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `S(a)`; for an atom outside the signature this is `{a, ⊤}`.
    pub fn subsumers(&self, a: &Atom) -> BTreeSet<Atom> {
        match self.index.get(a) {
            Some(&i) => self.subsumers[i].iter().map(|&j| self.atoms[j].clone()).collect(),
            None => [a.clone(), Atom::Top].into_iter().collect(),
        }
    }

    pub fn entails(&self, sub: &Atom, sup: &Atom) -> bool {
        if sub == sup || *sup == Atom::Top {
            return true;
        }
        match (self.index.get(sub), self.index.get(sup)) {
            (Some(&i), Some(&j)) => self.subsumers[i].contains(&j),
            _ => false,
        }
    }

    /// `R(r)` as atom pairs.
    pub fn role_links(&self, role: &Iri) -> BTreeSet<(Atom, Atom)> {
        self.links
            .get(role)
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(a, b)| (self.atoms[a].clone(), self.atoms[b].clone()))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn roles(&self) -> impl Iterator<Item = &Iri> {
        self.links.keys()
    }
}

#[derive(Default)]
struct Index {
    nf1: Vec<Vec<usize>>,
    /// conjunct → (other conjunct, superclass)
    nf2: Vec<Vec<(usize, usize)>>,
    /// sub → (role, filler)
    nf3: Vec<Vec<(usize, usize)>>,
    /// (role, filler) → superclasses
    nf4: BTreeMap<(usize, usize), Vec<usize>>,
    /// filler → (role, superclass)
    nf4_by_filler: Vec<Vec<(usize, usize)>>,
}

pub fn saturate(axioms: &[NormalizedAxiom]) -> Closure {
    let mut atom_set: BTreeSet<Atom> = BTreeSet::new();
    let mut role_set: BTreeSet<Iri> = BTreeSet::new();
    atom_set.insert(Atom::Top);
    for ax in axioms {
        atom_set.extend(ax.atoms().into_iter().cloned());
        if let Some(r) = ax.role() {
            role_set.insert(r.clone());
        }
    }
    let atoms: Vec<Atom> = atom_set.into_iter().collect();
    let index: BTreeMap<Atom, usize> = atoms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    let roles: Vec<Iri> = role_set.into_iter().collect();
    let role_index: BTreeMap<&Iri, usize> = roles.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let n = atoms.len();
    let top = index[&Atom::Top];

    let mut idx = Index {
        nf1: vec![Vec::new(); n],
        nf2: vec![Vec::new(); n],
        nf3: vec![Vec::new(); n],
        nf4: BTreeMap::new(),
        nf4_by_filler: vec![Vec::new(); n],
    };
    for ax in axioms {
        match ax {
            NormalizedAxiom::Nf1 { sub, sup } => idx.nf1[index[sub]].push(index[sup]),
            NormalizedAxiom::Nf2 { left, right, sup } => {
                let (l, r, s) = (index[left], index[right], index[sup]);
                idx.nf2[l].push((r, s));
                if l != r {
                    idx.nf2[r].push((l, s));
                }
            }
            NormalizedAxiom::Nf3 { sub, role, filler } => {
                idx.nf3[index[sub]].push((role_index[role], index[filler]))
            }
            NormalizedAxiom::Nf4 { role, filler, sup } => {
                let (r, f, s) = (role_index[role], index[filler], index[sup]);
                idx.nf4.entry((r, f)).or_default().push(s);
                idx.nf4_by_filler[f].push((r, s));
            }
        }
    }

    let mut subsumers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    // (r, b) → {a : (a, b) ∈ R(r)}
    let mut predecessors: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut links: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); roles.len()];
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();

    for (a, subs) in subsumers.iter_mut().enumerate() {
        for x in [a, top] {
            if subs.insert(x) {
                queue.push_back((a, x));
            }
        }
    }

    let add = |subsumers: &mut Vec<BTreeSet<usize>>, queue: &mut VecDeque<(usize, usize)>, a: usize, b: usize| {
        if subsumers[a].insert(b) {
            queue.push_back((a, b));
        }
    };

    while let Some((a, x)) = queue.pop_front() {
        // R1
        for &b in &idx.nf1[x] {
            add(&mut subsumers, &mut queue, a, b);
        }
        // R2
        for &(other, b) in &idx.nf2[x] {
            if subsumers[a].contains(&other) {
                add(&mut subsumers, &mut queue, a, b);
            }
        }
        // R3, with R4 applied to the new link against everything already in S(B)
        for &(r, b) in &idx.nf3[x] {
            if links[r].insert((a, b)) {
                predecessors.entry((r, b)).or_default().push(a);
                let fillers: Vec<usize> = subsumers[b].iter().copied().collect();
                for b2 in fillers {
                    if let Some(sups) = idx.nf4.get(&(r, b2)) {
                        for &s in sups {
                            add(&mut subsumers, &mut queue, a, s);
                        }
                    }
                }
            }
        }
        // R4 for a new subsumer x of a, against existing links (p, a)
        for &(r, s) in &idx.nf4_by_filler[x] {
            if let Some(preds) = predecessors.get(&(r, a)) {
                for &p in preds {
                    add(&mut subsumers, &mut queue, p, s);
                }
            }
        }
    }

    Closure {
        atoms,
        index,
        subsumers,
        links: roles.into_iter().zip(links).collect(),
    }
}

/// Which entailed atomic subsumptions to keep.
#[derive(Debug, Clone)]
pub struct EntailmentFilter {
    /// Drop conclusions that are asserted NF1 axioms.
    pub exclude_asserted: bool,
    /// Drop `A ⊑ ⊤`.
    pub exclude_top: bool,
}

impl Default for EntailmentFilter {
    fn default() -> Self {
        EntailmentFilter {
            exclude_asserted: true,
            exclude_top: true,
        }
    }
}

/// Entailed `A ⊑ B` with both sides in `signature`, never reflexive, in
/// sorted order.
pub fn entailed_nf1(
    axioms: &[NormalizedAxiom],
    signature: &BTreeSet<Atom>,
    filter: &EntailmentFilter,
) -> Vec<NormalizedAxiom> {
    let closure = saturate(axioms);
    entailed_nf1_from(&closure, axioms, signature, filter)
}

pub fn entailed_nf1_from(
    closure: &Closure,
    axioms: &[NormalizedAxiom],
    signature: &BTreeSet<Atom>,
    filter: &EntailmentFilter,
) -> Vec<NormalizedAxiom> {
    let asserted: BTreeSet<&NormalizedAxiom> = if filter.exclude_asserted {
        axioms.iter().filter(|a| matches!(a, NormalizedAxiom::Nf1 { .. })).collect()
    } else {
        BTreeSet::new()
    };
    let mut out = Vec::new();
    for sub in signature {
        for sup in closure.subsumers(sub) {
            if &sup == sub || !signature.contains(&sup) {
                continue;
            }
            if filter.exclude_top && sup == Atom::Top {
                continue;
            }
            let ax = NormalizedAxiom::nf1(sub.clone(), sup);
            if asserted.contains(&ax) {
                continue;
            }
            out.push(ax);
        }
    }
    out
}
