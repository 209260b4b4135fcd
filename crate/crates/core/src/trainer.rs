//! Role transforms, the hierarchy/role/conjunction losses, negative sampling
//! and the SGD loop.
//!
//! All gradients are hand-derived: each geometry kernel has a matching
//! backward pass in [`crate::geometry::raw`] and the encoder has its own in
//! [`EncoderParams::backward`]. Evaluation of a batch proceeds in three
//! layers: concept points, role-transformed filler points, loss terms.

use std::collections::BTreeMap;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::encoder::{EncoderParams, TokenVocab};
use crate::geometry::{self, raw, BallSpec, GeometryError, PoincarePoint, RotationAngles};
use crate::normalize::{Atom, DefinitionMap, NormalizedAxiom};
use crate::ontology::{collect_subexpressions, Concept, Iri, LabelMap, Ontology};
use crate::verbalize::{verbalize, verbalize_role, VerbalizeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("negative sampling from an empty candidate pool")]
    EmptyPool,
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss at step {step}: {term}")]
    NonFinite { step: usize, term: String },
    #[error("model does not fit the training data: {0}")]
    Shape(String),
}

/// `f_r(v) = k_r ⊙ R(Θ_r) v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleTransform {
    pub angles: RotationAngles,
    pub scale: f64,
}

impl RoleTransform {
    pub fn identity(m: usize) -> Self {
        RoleTransform {
            angles: RotationAngles::zeros(m),
            scale: 1.0,
        }
    }
}

pub fn apply_role(r: &RoleTransform, v: &PoincarePoint) -> Result<PoincarePoint, GeometryError> {
    let rotated = geometry::hrotate(&r.angles, v)?;
    Ok(geometry::hscale(r.scale, &rotated))
}

/// Affine map from a pooled role-label embedding to `(Θ_r, k_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleParamHead {
    pub d_tok: usize,
    /// Number of rotation angles, `dim / 2`.
    pub m: usize,
    /// `d_tok × (m + 1)`, row-major; the last column produces `k_r`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RoleParamHead {
    pub fn zeros(d_tok: usize, m: usize) -> Self {
        RoleParamHead {
            d_tok,
            m,
            weight: vec![0.0; d_tok * (m + 1)],
            bias: vec![0.0; m + 1],
        }
    }

    /// Small random weights and bias `(0, …, 0, 1)`, so every role starts
    /// close to the identity transform.
    pub fn init<R: Rng>(d_tok: usize, m: usize, range: f64, rng: &mut R) -> Self {
        let mut h = RoleParamHead::zeros(d_tok, m);
        for w in &mut h.weight {
            *w = rng.gen_range(-range..=range);
        }
        h.bias[m] = 1.0;
        h
    }

    fn width(&self) -> usize {
        self.m + 1
    }

    pub fn transform(&self, embedding: &[f64]) -> RoleTransform {
        let w = self.width();
        let mut out = self.bias.clone();
        for (i, &e) in embedding.iter().enumerate() {
            for (o, wij) in out.iter_mut().zip(&self.weight[i * w..(i + 1) * w]) {
                *o += e * wij;
            }
        }
        let scale = out.pop().unwrap_or(1.0);
        RoleTransform {
            angles: RotationAngles(out),
            scale,
        }
    }

    /// Accumulates parameter gradients and returns the gradient with
    /// respect to the input embedding.
    pub fn backward(&self, embedding: &[f64], g: &RoleGrad, grad: &mut RoleParamHead) -> Vec<f64> {
        let w = self.width();
        let dout: Vec<f64> = g.angles.iter().copied().chain(std::iter::once(g.scale)).collect();
        for (b, d) in grad.bias.iter_mut().zip(&dout) {
            *b += d;
        }
        let mut de = vec![0.0; self.d_tok];
        for (i, &e) in embedding.iter().enumerate() {
            let row = &self.weight[i * w..(i + 1) * w];
            let grow = &mut grad.weight[i * w..(i + 1) * w];
            for j in 0..w {
                grow[j] += e * dout[j];
                de[i] += row[j] * dout[j];
            }
        }
        de
    }
}

/// Gradient with respect to one role's `(Θ_r, k_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleGrad {
    pub angles: Vec<f64>,
    pub scale: f64,
}

impl RoleGrad {
    fn zeros(m: usize) -> Self {
        RoleGrad {
            angles: vec![0.0; m],
            scale: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Point-level losses

fn same_spec(points: &[&PoincarePoint]) -> Result<BallSpec, GeometryError> {
    let spec = points[0].spec();
    if points.iter().any(|p| p.spec() != spec) {
        return Err(GeometryError::SpecMismatch);
    }
    Ok(spec)
}

/// `max(0, d(c, d) − d(c, d_neg) + α)`.
pub fn loss_contrastive(
    c: &PoincarePoint,
    d: &PoincarePoint,
    d_neg: &PoincarePoint,
    alpha: f64,
) -> Result<f64, GeometryError> {
    let spec = same_spec(&[c, d, d_neg])?;
    let k = spec.kappa;
    Ok((raw::dist(c.coords(), d.coords(), k) - raw::dist(c.coords(), d_neg.coords(), k) + alpha).max(0.0))
}

/// `max(0, ‖d‖ − ‖c‖ + β)`.
pub fn loss_centripetal(c: &PoincarePoint, d: &PoincarePoint, beta: f64) -> Result<f64, GeometryError> {
    same_spec(&[c, d])?;
    Ok((geometry::hnorm(d) - geometry::hnorm(c) + beta).max(0.0))
}

/// Loss for `C ≺ D`: the contrastive part is averaged over the negatives,
/// the centripetal part is counted once.
pub fn loss_hierarchy(
    c: &PoincarePoint,
    d: &PoincarePoint,
    negatives: &[PoincarePoint],
    alpha: f64,
    beta: f64,
) -> Result<f64, GeometryError> {
    let mut all = vec![c, d];
    all.extend(negatives);
    let spec = same_spec(&all)?;
    let negs: Vec<&[f64]> = negatives.iter().map(|p| p.coords()).collect();
    Ok(hierarchy_kernel(c.coords(), d.coords(), &negs, alpha, beta, spec.kappa, false).loss)
}

/// `½ (L(⟦∃r.D⟧ ≺ f_r⟦D⟧) + L(f_r⟦D⟧ ≺ ⟦∃r.D⟧))`.
pub fn loss_role(
    existential: &PoincarePoint,
    filler: &PoincarePoint,
    role: &RoleTransform,
    negatives_fwd: &[PoincarePoint],
    negatives_bwd: &[PoincarePoint],
    alpha: f64,
    beta: f64,
) -> Result<f64, GeometryError> {
    let moved = apply_role(role, filler)?;
    let a = loss_hierarchy(existential, &moved, negatives_fwd, alpha, beta)?;
    let b = loss_hierarchy(&moved, existential, negatives_bwd, alpha, beta)?;
    Ok(0.5 * (a + b))
}

/// `½ (L(⟦C⊓D⟧ ≺ ⟦C⟧) + L(⟦C⊓D⟧ ≺ ⟦D⟧))`.
pub fn loss_conjunction(
    conjunction: &PoincarePoint,
    left: &PoincarePoint,
    right: &PoincarePoint,
    negatives_left: &[PoincarePoint],
    negatives_right: &[PoincarePoint],
    alpha: f64,
    beta: f64,
) -> Result<f64, GeometryError> {
    let a = loss_hierarchy(conjunction, left, negatives_left, alpha, beta)?;
    let b = loss_hierarchy(conjunction, right, negatives_right, alpha, beta)?;
    Ok(0.5 * (a + b))
}

struct KernelOut {
    loss: f64,
    child: Vec<f64>,
    parent: Vec<f64>,
    negatives: Vec<Vec<f64>>,
}

fn hierarchy_kernel(
    child: &[f64],
    parent: &[f64],
    negatives: &[&[f64]],
    alpha: f64,
    beta: f64,
    kappa: f64,
    want_grad: bool,
) -> KernelOut {
    let n = child.len();
    let mut out = KernelOut {
        loss: 0.0,
        child: vec![0.0; if want_grad { n } else { 0 }],
        parent: vec![0.0; if want_grad { n } else { 0 }],
        negatives: Vec::new(),
    };
    let (d_pos, g_pc, g_pp) = raw::dist_grad(child, parent, kappa);
    let weight = 1.0 / negatives.len().max(1) as f64;
    for neg in negatives {
        let (d_neg, g_nc, g_nn) = raw::dist_grad(child, neg, kappa);
        let hinge = d_pos - d_neg + alpha;
        let mut g_neg = vec![0.0; if want_grad { n } else { 0 }];
        if hinge > 0.0 {
            out.loss += weight * hinge;
            if want_grad {
                for i in 0..n {
                    out.child[i] += weight * (g_pc[i] - g_nc[i]);
                    out.parent[i] += weight * g_pp[i];
                    g_neg[i] = -weight * g_nn[i];
                }
            }
        }
        if want_grad {
            out.negatives.push(g_neg);
        }
    }
    let (nc, g_c) = raw::hnorm_grad(child, kappa);
    let (np, g_p) = raw::hnorm_grad(parent, kappa);
    let hinge = np - nc + beta;
    if hinge > 0.0 {
        out.loss += hinge;
        if want_grad {
            for i in 0..n {
                out.parent[i] += g_p[i];
                out.child[i] -= g_c[i];
            }
        }
    }
    out
}

/// Uniform draw from `candidates`.
pub fn sample_negative<'a, R: Rng, T>(rng: &mut R, candidates: &'a [T]) -> Result<&'a T, TrainError> {
    if candidates.is_empty() {
        return Err(TrainError::EmptyPool);
    }
    Ok(&candidates[rng.gen_range(0..candidates.len())])
}

// ---------------------------------------------------------------------------
// Training data

/// One summand of the training objective, over interned concept and role ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    /// An axiom `sub ⊑ sup`.
    Axiom { sub: usize, sup: usize },
    /// An existential `∃role.filler` occurring in the ontology.
    Role {
        existential: usize,
        role: usize,
        filler: usize,
    },
    /// A conjunction `left ⊓ right` occurring in the ontology.
    Conjunction {
        conjunction: usize,
        left: usize,
        right: usize,
    },
}

/// A term together with its negatives: one list per loss direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTerm {
    pub term: Term,
    pub negatives: [Vec<usize>; 2],
}

/// Interned concepts, roles and their verbalizations for one training
/// ontology.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub concepts: IndexSet<Concept>,
    pub concept_texts: Vec<String>,
    pub roles: IndexSet<Iri>,
    pub role_texts: Vec<String>,
    pub terms: Vec<Term>,
    /// Concept ids of every named atom in the axioms, in first-seen order.
    pub pool: Vec<usize>,
    pub vocab: TokenVocab,
    pub concept_tokens: Vec<Vec<usize>>,
    pub role_tokens: Vec<Vec<usize>>,
    pub labels: LabelMap,
    pub definitions: DefinitionMap,
}

impl TrainingData {
    /// Builds the term list and a vocabulary over the training verbalizations.
    pub fn build(axioms: &[NormalizedAxiom], labels: &LabelMap, defs: &DefinitionMap) -> Result<Self, TrainError> {
        Self::build_inner(axioms, labels, defs, None)
    }

    /// As [`TrainingData::build`] but tokenizes with an existing vocabulary.
    pub fn build_with_vocab(
        axioms: &[NormalizedAxiom],
        labels: &LabelMap,
        defs: &DefinitionMap,
        vocab: TokenVocab,
    ) -> Result<Self, TrainError> {
        Self::build_inner(axioms, labels, defs, Some(vocab))
    }

    fn build_inner(
        axioms: &[NormalizedAxiom],
        labels: &LabelMap,
        defs: &DefinitionMap,
        vocab: Option<TokenVocab>,
    ) -> Result<Self, TrainError> {
        let mut concepts = IndexSet::new();
        let mut pool = IndexSet::new();
        let mut terms = Vec::new();
        let plain: Vec<_> = axioms.iter().map(NormalizedAxiom::to_axiom).collect();
        for (ax, nf) in plain.iter().zip(axioms) {
            for atom in nf.atoms() {
                if let Atom::Named(_) = atom {
                    pool.insert(concepts.insert_full(atom.to_concept()).0);
                }
            }
            let sub = concepts.insert_full(ax.sub.clone()).0;
            let sup = concepts.insert_full(ax.sup.clone()).0;
            terms.push(Term::Axiom { sub, sup });
        }
        let mut roles = IndexSet::new();
        let subexpr = collect_subexpressions(&Ontology::new(plain));
        for ex in &subexpr.existentials {
            if let Concept::Existential { role, filler } = ex {
                let existential = concepts.insert_full(ex.clone()).0;
                let filler = concepts.insert_full((**filler).clone()).0;
                let role = roles.insert_full(role.clone()).0;
                terms.push(Term::Role {
                    existential,
                    role,
                    filler,
                });
            }
        }
        for cj in &subexpr.conjunctions {
            if let Concept::Conjunction(l, r) = cj {
                let conjunction = concepts.insert_full(cj.clone()).0;
                let left = concepts.insert_full((**l).clone()).0;
                let right = concepts.insert_full((**r).clone()).0;
                terms.push(Term::Conjunction {
                    conjunction,
                    left,
                    right,
                });
            }
        }
        let concept_texts = concepts
            .iter()
            .map(|c| verbalize(c, labels, defs))
            .collect::<Result<Vec<_>, _>>()?;
        let role_texts = roles
            .iter()
            .map(|r| verbalize_role(r, labels))
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = vocab.unwrap_or_else(|| {
            TokenVocab::build(concept_texts.iter().chain(&role_texts).map(String::as_str))
        });
        let concept_tokens = concept_texts.iter().map(|t| vocab.ids(t)).collect();
        let role_tokens = role_texts.iter().map(|t| vocab.ids(t)).collect();
        Ok(TrainingData {
            concepts,
            concept_texts,
            roles,
            role_texts,
            terms,
            pool: pool.into_iter().collect(),
            vocab,
            concept_tokens,
            role_tokens,
            labels: labels.clone(),
            definitions: defs.clone(),
        })
    }

    /// Atomic candidate concepts, by IRI.
    pub fn pool_iris(&self) -> Vec<Iri> {
        self.pool
            .iter()
            .filter_map(|&i| match &self.concepts[i] {
                Concept::Atomic(iri) => Some(iri.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn describe(&self, term: &Term) -> String {
        let c = |i: usize| self.concepts[i].to_string();
        match *term {
            Term::Axiom { sub, sup } => format!("axiom SubClassOf({} {})", c(sub), c(sup)),
            Term::Role { existential, .. } => format!("role term {}", c(existential)),
            Term::Conjunction { conjunction, .. } => format!("conjunction term {}", c(conjunction)),
        }
    }

    /// Draws negatives for a list of terms.
    pub fn plan<R: Rng>(
        &self,
        terms: &[Term],
        n_neg: usize,
        share_term_negatives: bool,
        rng: &mut R,
    ) -> Result<Vec<PlannedTerm>, TrainError> {
        let draw = |rng: &mut R| -> Result<Vec<usize>, TrainError> {
            (0..n_neg).map(|_| sample_negative(rng, &self.pool).copied()).collect()
        };
        terms
            .iter()
            .map(|&term| {
                let first = draw(rng)?;
                let second = match term {
                    Term::Axiom { .. } => Vec::new(),
                    _ if share_term_negatives => first.clone(),
                    _ => draw(rng)?,
                };
                Ok(PlannedTerm {
                    term,
                    negatives: [first, second],
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Model, loss evaluation and gradients

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntModel {
    pub ball: BallSpec,
    pub vocab: TokenVocab,
    pub encoder: EncoderParams,
    pub role_head: RoleParamHead,
}

impl OntModel {
    pub fn init<R: Rng>(vocab: TokenVocab, ball: BallSpec, d_tok: usize, range: f64, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(vocab.len(), d_tok, ball.dim, range, rng);
        let role_head = RoleParamHead::init(d_tok, ball.rotation_pairs(), range, rng);
        OntModel {
            ball,
            vocab,
            encoder,
            role_head,
        }
    }

    pub fn role_transform(&self, role_tokens: &[usize]) -> RoleTransform {
        self.role_head.transform(&self.encoder.pool(role_tokens))
    }

    pub fn role_transforms(&self, data: &TrainingData) -> Vec<RoleTransform> {
        data.role_tokens.iter().map(|ids| self.role_transform(ids)).collect()
    }

    fn check(&self, data: &TrainingData) -> Result<(), TrainError> {
        self.encoder
            .check(self.vocab.len(), &self.ball)
            .map_err(|e| TrainError::Shape(e.to_string()))?;
        if self.vocab != data.vocab {
            return Err(TrainError::Shape("vocabulary differs from the training data".into()));
        }
        if self.role_head.d_tok != self.encoder.d_tok || self.role_head.m != self.ball.rotation_pairs() {
            return Err(TrainError::Shape("role head does not match encoder".into()));
        }
        Ok(())
    }

    fn point(&self, ids: &[usize]) -> Vec<f64> {
        raw::project(&self.encoder.raw_vector(ids), &self.ball)
    }
}

/// Gradients for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub encoder: EncoderParams,
    pub role_head: RoleParamHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub per_term: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub alpha: f64,
    pub beta: f64,
}

impl From<&TrainConfig> for Margins {
    fn from(c: &TrainConfig) -> Self {
        Margins {
            alpha: c.alpha,
            beta: c.beta,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Concept(usize),
    /// `f_role(⟦filler⟧)`
    Moved(usize, usize),
}

struct Forward<'a> {
    model: &'a OntModel,
    data: &'a TrainingData,
    transforms: &'a [RoleTransform],
    points: BTreeMap<usize, Vec<f64>>,
    /// rotated point and final moved point
    moved: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)>,
}

impl<'a> Forward<'a> {
    fn concept(&mut self, c: usize) {
        if !self.points.contains_key(&c) {
            let p = self.model.point(&self.data.concept_tokens[c]);
            self.points.insert(c, p);
        }
    }

    fn slot(&mut self, s: Slot) {
        match s {
            Slot::Concept(c) => self.concept(c),
            Slot::Moved(r, f) => {
                self.concept(f);
                if !self.moved.contains_key(&(r, f)) {
                    let t = &self.transforms[r];
                    let rot = raw::rotate(&t.angles.0, &self.points[&f]);
                    let out = raw::scale(t.scale, &rot, &self.model.ball);
                    self.moved.insert((r, f), (rot, out));
                }
            }
        }
    }

    fn get(&self, s: Slot) -> &[f64] {
        match s {
            Slot::Concept(c) => &self.points[&c],
            Slot::Moved(r, f) => &self.moved[&(r, f)].1,
        }
    }
}

/// Each term as a list of weighted `(child, parent, negative-list index)` pieces.
fn pieces(term: &Term) -> Vec<(f64, Slot, Slot, usize)> {
    match *term {
        Term::Axiom { sub, sup } => vec![(1.0, Slot::Concept(sub), Slot::Concept(sup), 0)],
        Term::Role {
            existential,
            role,
            filler,
        } => {
            let e = Slot::Concept(existential);
            let m = Slot::Moved(role, filler);
            vec![(0.5, e, m, 0), (0.5, m, e, 1)]
        }
        Term::Conjunction {
            conjunction,
            left,
            right,
        } => {
            let c = Slot::Concept(conjunction);
            vec![(0.5, c, Slot::Concept(left), 0), (0.5, c, Slot::Concept(right), 1)]
        }
    }
}

fn add_into(acc: &mut Vec<f64>, g: &[f64], w: f64) {
    if acc.is_empty() {
        acc.resize(g.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(g) {
        *a += w * v;
    }
}

/// Encoder and per-role gradients for fixed role transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRoleGrad {
    pub encoder: EncoderParams,
    pub roles: Vec<RoleGrad>,
}

/// Loss of a planned batch with explicitly given role transforms, and
/// optionally its gradient with respect to the encoder and each `(Θ_r, k_r)`.
pub fn batch_loss_with_roles(
    model: &OntModel,
    data: &TrainingData,
    batch: &[PlannedTerm],
    margins: Margins,
    transforms: &[RoleTransform],
    want_grad: bool,
) -> Result<(BatchLoss, Option<FixedRoleGrad>), TrainError> {
    model.check(data)?;
    if transforms.len() != data.roles.len() {
        return Err(TrainError::Shape(format!(
            "{} role transforms for {} roles",
            transforms.len(),
            data.roles.len()
        )));
    }
    let kappa = model.ball.kappa;
    let mut fwd = Forward {
        model,
        data,
        transforms,
        points: BTreeMap::new(),
        moved: BTreeMap::new(),
    };
    let term_pieces: Vec<_> = batch.iter().map(|p| pieces(&p.term)).collect();
    for (planned, ps) in batch.iter().zip(&term_pieces) {
        for &(_, child, parent, _) in ps {
            fwd.slot(child);
            fwd.slot(parent);
        }
        for &n in planned.negatives.iter().flatten() {
            fwd.concept(n);
        }
    }

    let mut grads: BTreeMap<Slot, Vec<f64>> = BTreeMap::new();
    let mut per_term = Vec::with_capacity(batch.len());
    for (planned, ps) in batch.iter().zip(&term_pieces) {
        let mut loss = 0.0;
        for &(w, child, parent, which) in ps {
            let negs: Vec<&[f64]> = planned.negatives[which].iter().map(|n| fwd.points[n].as_slice()).collect();
            let k = hierarchy_kernel(
                fwd.get(child),
                fwd.get(parent),
                &negs,
                margins.alpha,
                margins.beta,
                kappa,
                want_grad,
            );
            loss += w * k.loss;
            if want_grad {
                add_into(grads.entry(child).or_default(), &k.child, w);
                add_into(grads.entry(parent).or_default(), &k.parent, w);
                for (n, g) in planned.negatives[which].iter().zip(&k.negatives) {
                    add_into(grads.entry(Slot::Concept(*n)).or_default(), g, w);
                }
            }
        }
        per_term.push(loss);
    }
    let total = per_term.iter().sum();
    let report = BatchLoss { total, per_term };
    if !want_grad {
        return Ok((report, None));
    }

    let m = model.ball.rotation_pairs();
    let mut roles = vec![RoleGrad::zeros(m); data.roles.len()];
    let mut concept_grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (slot, g) in grads {
        match slot {
            Slot::Concept(c) => add_into(concept_grads.entry(c).or_default(), &g, 1.0),
            Slot::Moved(r, f) => {
                let t = &transforms[r];
                let (rot, _) = &fwd.moved[&(r, f)];
                let (g_rot, g_k) = raw::scale_backward(t.scale, rot, &model.ball, &g);
                let (g_x, g_theta) = raw::rotate_backward(&t.angles.0, &fwd.points[&f], &g_rot);
                roles[r].scale += g_k;
                for (a, v) in roles[r].angles.iter_mut().zip(&g_theta) {
                    *a += v;
                }
                add_into(concept_grads.entry(f).or_default(), &g_x, 1.0);
            }
        }
    }
    let mut encoder = model.encoder.zeros_like();
    for (c, g) in concept_grads {
        model
            .encoder
            .backward(&data.concept_tokens[c], &model.ball, &g, &mut encoder);
    }
    Ok((report, Some(FixedRoleGrad { encoder, roles })))
}

/// Loss of a planned batch with role transforms produced by the role head.
pub fn batch_loss(
    model: &OntModel,
    data: &TrainingData,
    batch: &[PlannedTerm],
    margins: Margins,
) -> Result<BatchLoss, TrainError> {
    let transforms = model.role_transforms(data);
    Ok(batch_loss_with_roles(model, data, batch, margins, &transforms, false)?.0)
}

/// Loss and full gradient, back through the role head into the token table.
pub fn batch_gradient(
    model: &OntModel,
    data: &TrainingData,
    batch: &[PlannedTerm],
    margins: Margins,
) -> Result<(BatchLoss, ModelGrad), TrainError> {
    let transforms = model.role_transforms(data);
    let (loss, g) = batch_loss_with_roles(model, data, batch, margins, &transforms, true)?;
    let FixedRoleGrad { mut encoder, roles } = g.expect("gradient requested");
    let mut role_head = RoleParamHead::zeros(model.role_head.d_tok, model.role_head.m);
    for (r, g) in roles.iter().enumerate() {
        if g.scale == 0.0 && g.angles.iter().all(|v| *v == 0.0) {
            continue;
        }
        let ids = &data.role_tokens[r];
        let emb = model.encoder.pool(ids);
        let de = model.role_head.backward(&emb, g, &mut role_head);
        if ids.is_empty() {
            continue;
        }
        let inv = 1.0 / ids.len() as f64;
        let d = model.encoder.d_tok;
        for &id in ids {
            for (t, v) in encoder.token_table[id * d..(id + 1) * d].iter_mut().zip(&de) {
                *t += v * inv;
            }
        }
    }
    Ok((loss, ModelGrad { encoder, role_head }))
}

// ---------------------------------------------------------------------------
// Optimization loop

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Summed batch loss after each step's forward pass.
    pub step_losses: Vec<f64>,
    /// Mean per-term loss over each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: OntModel,
    pub log: TrainLog,
}

fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Trains a fresh model; every random choice flows from `cfg.seed`.
pub fn train(data: &TrainingData, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_observed(data, cfg, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_observed(
    data: &TrainingData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let ball = cfg.ball()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = OntModel::init(data.vocab.clone(), ball, cfg.d_tok, cfg.init_range, &mut rng);
    let margins = Margins::from(cfg);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.terms.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let terms: Vec<Term> = chunk.iter().map(|&i| data.terms[i]).collect();
            let batch = data.plan(&terms, cfg.n_neg, cfg.share_term_negatives, &mut rng)?;
            let (loss, grad) = batch_gradient(&model, data, &batch, margins)?;
            if let Some(bad) = loss.per_term.iter().position(|l| !l.is_finite()) {
                return Err(TrainError::NonFinite {
                    step,
                    term: data.describe(&batch[bad].term),
                });
            }
            for (p, g) in model.encoder.slices_mut().into_iter().zip(grad.encoder.slices()) {
                sgd_step(p, g, cfg.learning_rate);
            }
            sgd_step(&mut model.role_head.weight, &grad.role_head.weight, cfg.learning_rate);
            sgd_step(&mut model.role_head.bias, &grad.role_head.bias, cfg.learning_rate);
            let params_ok = model.encoder.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
                && model.role_head.weight.iter().chain(&model.role_head.bias).all(|v| v.is_finite());
            if !params_ok {
                return Err(TrainError::NonFinite {
                    step,
                    term: "parameters after update".into(),
                });
            }
            log.step_losses.push(loss.total);
            epoch_sum += loss.total;
            step += 1;
        }
        let mean = if data.terms.is_empty() {
            0.0
        } else {
            epoch_sum / data.terms.len() as f64
        };
        log.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome { model, log })
}
