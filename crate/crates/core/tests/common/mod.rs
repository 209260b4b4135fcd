//! Shared generators for the integration tests.
#![allow(dead_code)]

use ont_core::normalize::{normalize, normalize_with, Normalized, NormalizeOptions};
use ont_core::ontology::{Axiom, Concept, Iri, LabelMap, Ontology};
use ont_core::trainer::{Margins, OntModel, PlannedTerm, RoleTransform, TrainingData};
use ont_core::geometry::{BallSpec, RotationAngles};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 8] = ["red", "small", "cell", "bone", "organ", "part", "has", "left"];

pub fn concept_iri(i: usize) -> String {
    format!(":C{i}")
}

pub fn role_iri(i: usize) -> String {
    format!(":r{i}")
}

/// Random EL concept over `n_concepts` names and `n_roles` roles.
pub fn random_concept(rng: &mut ChaCha8Rng, n_concepts: usize, n_roles: usize, depth: usize) -> Concept {
    let atom = |rng: &mut ChaCha8Rng| Concept::atomic(&concept_iri(rng.gen_range(0..n_concepts)));
    if depth == 0 || rng.gen_bool(0.4) {
        return atom(rng);
    }
    if n_roles > 0 && rng.gen_bool(0.5) {
        let r = role_iri(rng.gen_range(0..n_roles));
        Concept::some(&r, random_concept(rng, n_concepts, n_roles, depth - 1))
    } else {
        Concept::and(
            random_concept(rng, n_concepts, n_roles, depth - 1),
            random_concept(rng, n_concepts, n_roles, depth - 1),
        )
    }
}

pub fn random_ontology(
    rng: &mut ChaCha8Rng,
    n_axioms: usize,
    n_concepts: usize,
    n_roles: usize,
    depth: usize,
) -> Ontology {
    let axioms = (0..n_axioms)
        .map(|_| {
            Axiom::new(
                random_concept(rng, n_concepts, n_roles, depth),
                random_concept(rng, n_concepts, n_roles, depth),
            )
        })
        .collect();
    Ontology::new(axioms)
}

/// Labels drawn from [`WORDS`] for every concept and role name.
pub fn random_labels(rng: &mut ChaCha8Rng, n_concepts: usize, n_roles: usize) -> LabelMap {
    let mut l = LabelMap::default();
    for i in 0..n_concepts {
        let n = rng.gen_range(1..=2);
        let text: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        l.insert_concept(Iri::new(concept_iri(i)).unwrap(), text.join(" "));
    }
    for i in 0..n_roles {
        l.insert_role(Iri::new(role_iri(i)).unwrap(), WORDS[rng.gen_range(0..WORDS.len())]);
    }
    l
}

pub struct MicroConfig {
    pub data: TrainingData,
    pub model: OntModel,
    pub batch: Vec<PlannedTerm>,
    pub margins: Margins,
    pub transforms: Vec<RoleTransform>,
}

/// A tiny ontology, model and planned batch for gradient checks
/// (dim ≤ 8, vocabulary ≤ 10 with the unknown-token bucket).
pub fn micro_config(seed: u64) -> MicroConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n_concepts = rng.gen_range(2..=4);
        let n_roles = rng.gen_range(1..=2);
        let n_axioms = rng.gen_range(2..=4);
        let o = random_ontology(&mut rng, n_axioms, n_concepts, n_roles, 2);
        let labels = random_labels(&mut rng, n_concepts, n_roles);
        let n = normalize(&o);
        let Ok(data) = TrainingData::build(&n.axioms, &labels, &n.definitions) else { continue };
        if data.pool.is_empty() || data.roles.is_empty() {
            continue;
        }
        let dim = 2 * rng.gen_range(1..=4);
        let d_tok = rng.gen_range(1..=4);
        let model = OntModel::init(data.vocab.clone(), BallSpec::unit(dim), d_tok, 0.6, &mut rng);
        let n_neg = rng.gen_range(1..=2);
        let batch = data.plan(&data.terms, n_neg, rng.gen_bool(0.3), &mut rng).unwrap();
        let margins = if rng.gen_bool(0.5) {
            Margins { alpha: 3.0, beta: 0.5 }
        } else {
            Margins {
                alpha: rng.gen_range(0.0..1.0),
                beta: rng.gen_range(0.0..0.5),
            }
        };
        let transforms = (0..data.roles.len())
            .map(|_| RoleTransform {
                angles: RotationAngles((0..dim / 2).map(|_| rng.gen_range(-1.5..1.5)).collect()),
                scale: rng.gen_range(0.5..2.0),
            })
            .collect();
        return MicroConfig {
            data,
            model,
            batch,
            margins,
            transforms,
        };
    }
}

/// Normalizes twice: in axiom order and with a shuffled visiting order,
/// which changes the fresh-name assignment.
pub fn two_orderings(o: &Ontology, seed: u64) -> (Normalized, Normalized) {
    let a = normalize(o);
    let b = normalize_with(o, &NormalizeOptions { shuffle_seed: Some(seed) });
    (a, b)
}

pub const FD_STEP: f64 = 1e-4;

/// Largest relative errors between analytic and central-difference
/// gradients, per parameter class.
#[derive(Debug, Default, Clone)]
pub struct GradReport {
    pub token_table: f64,
    pub out_weight: f64,
    pub out_bias: f64,
    pub angles: f64,
    pub scale: f64,
    pub head_weight: f64,
    pub head_bias: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        [
            self.token_table,
            self.out_weight,
            self.out_bias,
            self.angles,
            self.scale,
            self.head_weight,
            self.head_bias,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP)
}

pub fn grad_check(cfg: &MicroConfig) -> GradReport {
    use ont_core::trainer::{batch_gradient, batch_loss, batch_loss_with_roles};
    let MicroConfig {
        data,
        model,
        batch,
        margins,
        transforms,
    } = cfg;
    let fixed = |m: &OntModel, t: &[RoleTransform]| {
        batch_loss_with_roles(m, data, batch, *margins, t, false).unwrap().0.total
    };
    let full = |m: &OntModel| batch_loss(m, data, batch, *margins).unwrap().total;

    let (_, g) = batch_loss_with_roles(model, data, batch, *margins, transforms, true).unwrap();
    let g = g.unwrap();
    let mut report = GradReport::default();

    // encoder parameters with the role transforms held fixed
    for (class, which) in [(0usize, &mut report.token_table), (1, &mut report.out_weight), (2, &mut report.out_bias)] {
        let analytic = g.encoder.slices()[class].clone();
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                central(|h| {
                    let mut m = model.clone();
                    m.encoder.slices_mut()[class][i] += h;
                    fixed(&m, transforms)
                })
            })
            .collect();
        *which = relative_error(&analytic, &numeric);
    }

    // Θ_r and k_r
    let mut a_angles = Vec::new();
    let mut n_angles = Vec::new();
    let mut a_scale = Vec::new();
    let mut n_scale = Vec::new();
    for (r, rg) in g.roles.iter().enumerate() {
        for j in 0..rg.angles.len() {
            a_angles.push(rg.angles[j]);
            n_angles.push(central(|h| {
                let mut t = transforms.clone();
                t[r].angles.0[j] += h;
                fixed(model, &t)
            }));
        }
        a_scale.push(rg.scale);
        n_scale.push(central(|h| {
            let mut t = transforms.clone();
            t[r].scale += h;
            fixed(model, &t)
        }));
    }
    report.angles = relative_error(&a_angles, &n_angles);
    report.scale = relative_error(&a_scale, &n_scale);

    // full path through the role head, which also feeds the token table
    let (_, mg) = batch_gradient(model, data, batch, *margins).unwrap();
    let numeric: Vec<f64> = (0..mg.role_head.weight.len())
        .map(|i| {
            central(|h| {
                let mut m = model.clone();
                m.role_head.weight[i] += h;
                full(&m)
            })
        })
        .collect();
    report.head_weight = relative_error(&mg.role_head.weight, &numeric);
    let numeric: Vec<f64> = (0..mg.role_head.bias.len())
        .map(|i| {
            central(|h| {
                let mut m = model.clone();
                m.role_head.bias[i] += h;
                full(&m)
            })
        })
        .collect();
    report.head_bias = relative_error(&mg.role_head.bias, &numeric);
    let numeric: Vec<f64> = (0..mg.encoder.token_table.len())
        .map(|i| {
            central(|h| {
                let mut m = model.clone();
                m.encoder.token_table[i] += h;
                full(&m)
            })
        })
        .collect();
    report.token_table = report.token_table.max(relative_error(&mg.encoder.token_table, &numeric));
    report
}

/// A 60-axiom synthetic ontology with compositional labels: five roots,
/// three refinements per root and two per refinement (45 NF1 edges), ten
/// existential axioms and five conjunction axioms.
pub fn toy_ontology() -> (Ontology, LabelMap) {
    const ROOTS: [&str; 5] = ["animal", "plant", "tool", "vehicle", "mineral"];
    const MID: [&str; 3] = ["wild", "domestic", "giant"];
    const LEAF: [&str; 2] = ["small", "old"];
    const ROLES: [(&str, &str); 4] = [(":eats", "eats"), (":uses", "uses"), (":livesIn", "lives in"), (":partOf", "part of")];
    let mut labels = LabelMap::default();
    let mut axioms = Vec::new();
    let l1 = |i: usize| format!(":L1_{i}");
    let l2 = |i: usize, j: usize| format!(":L2_{i}_{j}");
    let l3 = |i: usize, j: usize, k: usize| format!(":L3_{i}_{j}_{k}");
    let iri = |s: &str| Iri::new(s).unwrap();
    for (i, root) in ROOTS.iter().enumerate() {
        labels.insert_concept(iri(&l1(i)), *root);
        for (j, mid) in MID.iter().enumerate() {
            labels.insert_concept(iri(&l2(i, j)), format!("{mid} {root}"));
            axioms.push(Axiom::new(Concept::atomic(&l2(i, j)), Concept::atomic(&l1(i))));
            for (k, leaf) in LEAF.iter().enumerate() {
                labels.insert_concept(iri(&l3(i, j, k)), format!("{leaf} {mid} {root}"));
                axioms.push(Axiom::new(Concept::atomic(&l3(i, j, k)), Concept::atomic(&l2(i, j))));
            }
        }
    }
    for (r, text) in ROLES {
        labels.insert_role(iri(r), text);
    }
    for t in 0..10 {
        let (role, _) = ROLES[t % 4];
        let (i, j, k) = (t % 5, t % 3, t % 2);
        let target = Concept::atomic(&l2((i + 1) % 5, (j + 1) % 3));
        if t % 2 == 0 {
            axioms.push(Axiom::new(Concept::atomic(&l3(i, j, k)), Concept::some(role, target)));
        } else {
            axioms.push(Axiom::new(Concept::some(role, target), Concept::atomic(&l1(i))));
        }
    }
    for i in 0..5 {
        axioms.push(Axiom::new(
            Concept::and(Concept::atomic(&l2(i, 0)), Concept::atomic(&l2(i, 1))),
            Concept::atomic(&l1(i)),
        ));
    }
    (Ontology::new(axioms), labels)
}
