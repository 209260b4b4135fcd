//! Scoring, ranking, metrics, λ selection and dataset construction.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::encoder::{embed_concept, EmbedError, TextEncoder};
use crate::geometry::raw;
use crate::normalize::{Atom, DefinitionMap, NfKind, NormalizedAxiom};
use crate::ontology::{Concept, Iri, LabelMap};
use crate::reasoner::{entailed_nf1, EntailmentFilter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("the answer of {0} is not an atomic concept")]
    NotAtomic(String),
    #[error("cannot corrupt {slot:?} of an {kind} axiom")]
    Protocol { kind: NfKind, slot: Corrupt },
    #[error("no ranks to summarize")]
    EmptyRanks,
    #[error("empty validation set")]
    EmptyValidation,
    #[error("empty lambda grid")]
    EmptyGrid,
    #[error("lambda {0} outside [0, 1]")]
    Lambda(f64),
}

/// `s(C ⊑ D) = −(d(c, d) + λ(‖d‖ − ‖c‖))` on raw ball coordinates.
pub fn score_points(c: &[f64], d: &[f64], kappa: f64, lambda: f64) -> f64 {
    -(raw::dist(c, d, kappa) + lambda * (raw::hnorm(d, kappa) - raw::hnorm(c, kappa)))
}

pub fn score<E: TextEncoder + ?Sized>(
    sub: &Concept,
    sup: &Concept,
    encoder: &E,
    labels: &LabelMap,
    defs: &DefinitionMap,
    lambda: f64,
) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EvalError::Lambda(lambda));
    }
    let c = embed_concept(sub, labels, defs, encoder)?;
    let d = embed_concept(sup, labels, defs, encoder)?;
    Ok(score_points(c.coords(), d.coords(), encoder.ball().kappa, lambda))
}

/// `1 +` the number of other candidates scoring at least as high as the truth.
pub fn rank_from_scores(truth: f64, others: &[f64]) -> usize {
    1 + others.iter().filter(|&&s| s >= truth).count()
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ranks: Vec<usize>,
    /// Fractions in `[0, 1]`; shown as percentages.
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub hits_at_100: f64,
    pub mrr: f64,
    pub mean_rank: f64,
}

pub fn compute_metrics(ranks: &[usize]) -> Result<RankingReport, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RankingReport {
        ranks: ranks.to_vec(),
        hits_at_1: hits(1),
        hits_at_10: hits(10),
        hits_at_100: hits(100),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
    })
}

impl fmt::Display for RankingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>10}", "metric", "value")?;
        writeln!(f, "{:<8}{:>10}", "axioms", self.ranks.len())?;
        writeln!(f, "{:<8}{:>10.2}", "H@1", 100.0 * self.hits_at_1)?;
        writeln!(f, "{:<8}{:>10.2}", "H@10", 100.0 * self.hits_at_10)?;
        writeln!(f, "{:<8}{:>10.2}", "H@100", 100.0 * self.hits_at_100)?;
        writeln!(f, "{:<8}{:>10.2}", "MRR", 100.0 * self.mrr)?;
        write!(f, "{:<8}{:>10.2}", "MR", self.mean_rank)
    }
}

// ---------------------------------------------------------------------------
// Ranking

/// Which atom of a test axiom is replaced by candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corrupt {
    /// The atomic subclass (`A` in NF1 and NF3).
    Sub,
    /// The atomic superclass (`B` in NF1/NF2, `A` in NF4).
    Sup,
    /// The filler of the existential (NF3 and NF4).
    Filler,
}

/// Corruption side per normal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionProtocol {
    pub nf1: Corrupt,
    pub nf2: Corrupt,
    pub nf3: Corrupt,
    pub nf4: Corrupt,
    /// Skip candidates whose corrupted axiom is a tautology such as `A ⊑ A`
    /// or `A ⊓ B ⊑ A`. Such a candidate always scores at least as high as
    /// any true superclass, so keeping it caps every NF1 rank at 2.
    pub skip_tautologies: bool,
}

impl Default for CorruptionProtocol {
    fn default() -> Self {
        CorruptionProtocol {
            nf1: Corrupt::Sup,
            nf2: Corrupt::Sup,
            nf3: Corrupt::Filler,
            nf4: Corrupt::Sup,
            skip_tautologies: true,
        }
    }
}

impl CorruptionProtocol {
    pub fn slot(&self, kind: NfKind) -> Corrupt {
        match kind {
            NfKind::Nf1 => self.nf1,
            NfKind::Nf2 => self.nf2,
            NfKind::Nf3 => self.nf3,
            NfKind::Nf4 => self.nf4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Template {
    Atom,
    Exists(Iri),
}

impl Template {
    fn instantiate(&self, cand: &Iri) -> Concept {
        let a = Concept::Atomic(cand.clone());
        match self {
            Template::Atom => a,
            Template::Exists(r) => Concept::Existential {
                role: r.clone(),
                filler: Box::new(a),
            },
        }
    }
}

struct Query {
    fixed: Concept,
    /// Whether the fixed concept is the subsumee.
    fixed_is_sub: bool,
    template: Template,
    truth: Iri,
}

fn query(ax: &NormalizedAxiom, slot: Corrupt) -> Result<Query, EvalError> {
    use NormalizedAxiom::*;
    let named = |a: &Atom| a.iri().cloned().ok_or_else(|| EvalError::NotAtomic(ax.to_string()));
    let some = |r: &Iri, b: &Atom| Concept::Existential {
        role: r.clone(),
        filler: Box::new(b.to_concept()),
    };
    let q = |fixed, fixed_is_sub, template, truth| Query {
        fixed,
        fixed_is_sub,
        template,
        truth,
    };
    Ok(match (ax, slot) {
        (Nf1 { sub, sup }, Corrupt::Sup) => q(sub.to_concept(), true, Template::Atom, named(sup)?),
        (Nf1 { sub, sup }, Corrupt::Sub) => q(sup.to_concept(), false, Template::Atom, named(sub)?),
        (Nf2 { left, right, sup }, Corrupt::Sup) => q(
            Concept::and(left.to_concept(), right.to_concept()),
            true,
            Template::Atom,
            named(sup)?,
        ),
        (Nf3 { sub, role, filler }, Corrupt::Filler) => {
            q(sub.to_concept(), true, Template::Exists(role.clone()), named(filler)?)
        }
        (Nf3 { sub, role, filler }, Corrupt::Sub) => q(some(role, filler), false, Template::Atom, named(sub)?),
        (Nf4 { role, filler, sup }, Corrupt::Sup) => q(some(role, filler), true, Template::Atom, named(sup)?),
        (Nf4 { role, filler, sup }, Corrupt::Filler) => {
            q(sup.to_concept(), false, Template::Exists(role.clone()), named(filler)?)
        }
        (ax, slot) => return Err(EvalError::Protocol { kind: ax.kind(), slot }),
    })
}

fn corrupt(ax: &NormalizedAxiom, slot: Corrupt, cand: &Iri) -> NormalizedAxiom {
    use NormalizedAxiom::*;
    let c = Atom::Named(cand.clone());
    let mut out = ax.clone();
    match (&mut out, slot) {
        (Nf1 { sup, .. } | Nf2 { sup, .. } | Nf4 { sup, .. }, Corrupt::Sup) => *sup = c,
        (Nf1 { sub, .. } | Nf3 { sub, .. }, Corrupt::Sub) => *sub = c,
        (Nf3 { filler, .. } | Nf4 { filler, .. }, Corrupt::Filler) => *filler = c,
        _ => {}
    }
    out
}

fn is_tautology(ax: &NormalizedAxiom) -> bool {
    use NormalizedAxiom::*;
    match ax {
        Nf1 { sub, sup } => sub == sup || *sup == Atom::Top,
        Nf2 { left, right, sup } => sup == left || sup == right || *sup == Atom::Top,
        Nf3 { .. } => false,
        Nf4 { sup, .. } => *sup == Atom::Top,
    }
}

/// Ball point and its hyperbolic norm.
type Embedded = (Vec<f64>, f64);

/// Ranks test axioms against a fixed candidate pool under a frozen encoder.
pub struct Ranker<'a, E: TextEncoder + ?Sized> {
    encoder: &'a E,
    labels: &'a LabelMap,
    defs: &'a DefinitionMap,
    pool: Vec<Iri>,
    protocol: CorruptionProtocol,
    known: Option<&'a HashSet<NormalizedAxiom>>,
    cache: HashMap<Template, Vec<Embedded>>,
}

/// Everything needed to rank one axiom at any λ.
struct AxiomScores {
    fixed_norm: f64,
    fixed_is_sub: bool,
    truth: (f64, f64),
    others: Vec<(f64, f64)>,
}

impl AxiomScores {
    fn score(&self, (dist, norm): (f64, f64), lambda: f64) -> f64 {
        let gap = if self.fixed_is_sub {
            norm - self.fixed_norm
        } else {
            self.fixed_norm - norm
        };
        -(dist + lambda * gap)
    }

    fn rank(&self, lambda: f64) -> usize {
        let t = self.score(self.truth, lambda);
        1 + self.others.iter().filter(|&&o| self.score(o, lambda) >= t).count()
    }
}

impl<'a, E: TextEncoder + ?Sized> Ranker<'a, E> {
    pub fn new(encoder: &'a E, labels: &'a LabelMap, defs: &'a DefinitionMap, pool: Vec<Iri>) -> Self {
        Ranker {
            encoder,
            labels,
            defs,
            pool,
            protocol: CorruptionProtocol::default(),
            known: None,
            cache: HashMap::new(),
        }
    }

    pub fn with_protocol(mut self, protocol: CorruptionProtocol) -> Self {
        self.protocol = protocol;
        self
    }

    /// Filtered ranking: candidates forming a known axiom other than the
    /// truth are skipped.
    pub fn with_filter(mut self, known: &'a HashSet<NormalizedAxiom>) -> Self {
        self.known = Some(known);
        self
    }

    pub fn pool(&self) -> &[Iri] {
        &self.pool
    }

    fn embed(&self, c: &Concept) -> Result<Embedded, EvalError> {
        let p = embed_concept(c, self.labels, self.defs, self.encoder)?;
        let norm = raw::hnorm(p.coords(), self.encoder.ball().kappa);
        Ok((p.into_coords(), norm))
    }

    fn pool_points(&mut self, t: &Template) -> Result<(), EvalError> {
        if !self.cache.contains_key(t) {
            let pts = self
                .pool
                .iter()
                .map(|c| self.embed(&t.instantiate(c)))
                .collect::<Result<Vec<_>, _>>()?;
            self.cache.insert(t.clone(), pts);
        }
        Ok(())
    }

    fn scores(&mut self, ax: &NormalizedAxiom) -> Result<AxiomScores, EvalError> {
        let slot = self.protocol.slot(ax.kind());
        let q = query(ax, slot)?;
        let kappa = self.encoder.ball().kappa;
        let (fixed, fixed_norm) = self.embed(&q.fixed)?;
        let (truth_pt, truth_norm) = self.embed(&q.template.instantiate(&q.truth))?;
        self.pool_points(&q.template)?;
        let pts = &self.cache[&q.template];
        let mut others = Vec::with_capacity(pts.len());
        for (cand, (p, n)) in self.pool.iter().zip(pts) {
            if *cand == q.truth {
                continue;
            }
            if self.protocol.skip_tautologies && is_tautology(&corrupt(ax, slot, cand)) {
                continue;
            }
            if let Some(known) = self.known {
                if known.contains(&corrupt(ax, slot, cand)) {
                    continue;
                }
            }
            others.push((raw::dist(&fixed, p, kappa), *n));
        }
        Ok(AxiomScores {
            fixed_norm,
            fixed_is_sub: q.fixed_is_sub,
            truth: (raw::dist(&fixed, &truth_pt, kappa), truth_norm),
            others,
        })
    }

    pub fn rank(&mut self, ax: &NormalizedAxiom, lambda: f64) -> Result<usize, EvalError> {
        Ok(self.scores(ax)?.rank(lambda))
    }

    pub fn ranks(&mut self, axioms: &[NormalizedAxiom], lambda: f64) -> Result<Vec<usize>, EvalError> {
        axioms.iter().map(|ax| self.rank(ax, lambda)).collect()
    }

    /// One rank list per grid entry, scoring each axiom once.
    pub fn ranks_for_grid(&mut self, axioms: &[NormalizedAxiom], grid: &[f64]) -> Result<Vec<Vec<usize>>, EvalError> {
        let mut out = vec![Vec::with_capacity(axioms.len()); grid.len()];
        for ax in axioms {
            let s = self.scores(ax)?;
            for (ranks, &l) in out.iter_mut().zip(grid) {
                ranks.push(s.rank(l));
            }
        }
        Ok(out)
    }

    pub fn evaluate(&mut self, axioms: &[NormalizedAxiom], lambda: f64) -> Result<RankingReport, EvalError> {
        compute_metrics(&self.ranks(axioms, lambda)?)
    }
}

/// Per-λ validation MRR and the λ with the best one; ties go to the smaller λ.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub mrr_by_lambda: Vec<(f64, f64)>,
}

pub fn select_lambda<E: TextEncoder + ?Sized>(
    ranker: &mut Ranker<'_, E>,
    valid: &[NormalizedAxiom],
    grid: &[f64],
) -> Result<LambdaSelection, EvalError> {
    if valid.is_empty() {
        return Err(EvalError::EmptyValidation);
    }
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let per = ranker.ranks_for_grid(valid, grid)?;
    let mrr_by_lambda: Vec<(f64, f64)> = grid
        .iter()
        .zip(&per)
        .map(|(&l, r)| compute_metrics(r).map(|m| (l, m.mrr)))
        .collect::<Result<_, _>>()?;
    Ok(LambdaSelection {
        lambda: pick_lambda(&mrr_by_lambda),
        mrr_by_lambda,
    })
}

/// Largest MRR, smaller λ on ties.
pub fn pick_lambda(mrr_by_lambda: &[(f64, f64)]) -> f64 {
    let mut best = mrr_by_lambda[0];
    for &(l, m) in &mrr_by_lambda[1..] {
        if m > best.1 || (m == best.1 && l < best.0) {
            best = (l, m);
        }
    }
    best.0
}

/// Ranking options shared by in-domain and transfer evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub protocol: CorruptionProtocol,
    /// Known axioms removed from the candidate lists (filtered setting).
    pub known: Option<HashSet<NormalizedAxiom>>,
}

/// Ranks `test` against the checkpoint's training candidates.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    test: &[NormalizedAxiom],
    lambda: f64,
    opts: &EvalOptions,
) -> Result<RankingReport, EvalError> {
    let enc = ck.encoder();
    let mut ranker = Ranker::new(&enc, &ck.labels, &ck.definitions, ck.candidates.clone()).with_protocol(opts.protocol);
    if let Some(k) = &opts.known {
        ranker = ranker.with_filter(k);
    }
    ranker.evaluate(test, lambda)
}

/// A target ontology for transfer: axioms to rank plus their vocabulary.
#[derive(Debug, Clone, Default)]
pub struct TargetDataset {
    pub axioms: Vec<NormalizedAxiom>,
    pub labels: LabelMap,
    pub definitions: DefinitionMap,
}

impl TargetDataset {
    /// Named atoms of the target axioms, sorted.
    pub fn candidates(&self) -> Vec<Iri> {
        let set: BTreeSet<Iri> = self
            .axioms
            .iter()
            .flat_map(|a| a.atoms())
            .filter_map(|a| a.iri().cloned())
            .collect();
        set.into_iter().collect()
    }
}

/// Scores a target ontology with a frozen source checkpoint.
pub fn transfer_evaluate(
    ck: &Checkpoint,
    target: &TargetDataset,
    lambda: f64,
    opts: &EvalOptions,
) -> Result<RankingReport, EvalError> {
    let enc = ck.encoder();
    let mut ranker =
        Ranker::new(&enc, &target.labels, &target.definitions, target.candidates()).with_protocol(opts.protocol);
    if let Some(k) = &opts.known {
        ranker = ranker.with_filter(k);
    }
    ranker.evaluate(&target.axioms, lambda)
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle then `⌊0.8n⌋ / ⌊0.1n⌋ / rest`.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Split<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = v.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let test = v.split_off(n_train + n_valid);
    let valid = v.split_off(n_train);
    Split { train: v, valid, test }
}

/// [`split_dataset`] applied to each normal form separately, with the
/// parts concatenated in NF1..NF4 order.
pub fn split_by_kind(axioms: &[NormalizedAxiom], seed: u64) -> Split<NormalizedAxiom> {
    let mut out = Split {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for kind in NfKind::ALL {
        let part: Vec<_> = axioms.iter().filter(|a| a.kind() == kind).cloned().collect();
        let s = split_dataset(&part, seed);
        out.train.extend(s.train);
        out.valid.extend(s.valid);
        out.test.extend(s.test);
    }
    out
}

pub fn nf_counts(axioms: &[NormalizedAxiom]) -> [usize; 4] {
    let mut c = [0; 4];
    for a in axioms {
        c[a.kind() as usize] += 1;
    }
    c
}

pub const INFERENCE_VALID_SIZE: usize = 1000;

/// Train on everything; test on every entailed atomic subsumption over
/// `signature`; validate on up to 1000 of those drawn without replacement.
pub fn build_inference_sets(
    axioms: &[NormalizedAxiom],
    signature: &BTreeSet<Atom>,
    seed: u64,
    filter: &EntailmentFilter,
) -> Split<NormalizedAxiom> {
    let test = entailed_nf1(axioms, signature, filter);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let valid = test
        .choose_multiple(&mut rng, INFERENCE_VALID_SIZE.min(test.len()))
        .cloned()
        .collect();
    Split {
        train: axioms.to_vec(),
        valid,
        test,
    }
}
