mod common;

use std::collections::BTreeSet;

use ont_core::encoder::EncoderParams;
use ont_core::eval::{compute_metrics, rank_from_scores, score_points};
use ont_core::geometry::{hdist, hnorm, hrotate, hscale, raw, BallSpec, PoincarePoint, RotationAngles};
use ont_core::normalize::{normalize, Atom, NormalizedAxiom};
use ont_core::ontology::{collect_subexpressions, parse_ontology, Axiom, Concept, Iri, Ontology};
use ont_core::reasoner::{entailed_nf1, saturate, EntailmentFilter};
use ont_core::verbalize::verbalize;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn concept_strategy() -> impl Strategy<Value = Concept> {
    let leaf = prop_oneof![
        8 => (0..6usize).prop_map(|i| Concept::atomic(&format!(":C{i}"))),
        1 => Just(Concept::Top),
        1 => Just(Concept::Bottom),
        1 => (0..3usize).prop_map(|i| Concept::Nominal(Iri::new(format!(":ind{i}")).unwrap())),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Concept::and(l, r)),
            ((0..3usize), inner).prop_map(|(r, f)| Concept::some(&format!(":r{r}"), f)),
        ]
    })
}

fn ontology_strategy() -> impl Strategy<Value = Ontology> {
    prop::collection::vec((concept_strategy(), concept_strategy()), 0..12)
        .prop_map(|pairs| Ontology::new(pairs.into_iter().map(|(s, d)| Axiom::new(s, d)).collect()))
}

fn point(spec: BallSpec) -> impl Strategy<Value = PoincarePoint> {
    prop::collection::vec(-3.0..3.0f64, spec.dim)
        .prop_map(move |v| ont_core::geometry::project_to_ball(&v, spec).unwrap())
}

/// Independent recursive enumeration of complex subterms.
fn subterms(c: &Concept, ex: &mut Vec<Concept>, cj: &mut Vec<Concept>) {
    match c {
        Concept::Conjunction(l, r) => {
            if !cj.contains(c) {
                cj.push(c.clone());
            }
            subterms(l, ex, cj);
            subterms(r, ex, cj);
        }
        Concept::Existential { filler, .. } => {
            if !ex.contains(c) {
                ex.push(c.clone());
            }
            subterms(filler, ex, cj);
        }
        _ => {}
    }
}

fn names(c: &Concept, out: &mut BTreeSet<String>, roles: &mut BTreeSet<String>) {
    match c {
        Concept::Atomic(i) | Concept::Nominal(i) => {
            out.insert(i.to_string());
        }
        Concept::Conjunction(l, r) => {
            names(l, out, roles);
            names(r, out, roles);
        }
        Concept::Existential { role, filler } => {
            roles.insert(role.to_string());
            names(filler, out, roles);
        }
        _ => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn functional_syntax_round_trips(o in ontology_strategy()) {
        let back = parse_ontology(&o.to_functional()).unwrap();
        prop_assert_eq!(back.axioms(), o.axioms());
    }

    #[test]
    fn subexpressions_match_tree_walk(o in ontology_strategy()) {
        let got = collect_subexpressions(&o);
        let (mut ex, mut cj) = (Vec::new(), Vec::new());
        for ax in o.axioms() {
            subterms(&ax.sub, &mut ex, &mut cj);
            subterms(&ax.sup, &mut ex, &mut cj);
        }
        let as_set = |v: Vec<Concept>| v.into_iter().collect::<BTreeSet<_>>();
        prop_assert_eq!(as_set(got.existentials.into_iter().collect()), as_set(ex));
        prop_assert_eq!(as_set(got.conjunctions.into_iter().collect()), as_set(cj));
    }

    #[test]
    fn signature_is_every_name_used(o in ontology_strategy()) {
        let (mut cs, mut rs) = (BTreeSet::new(), BTreeSet::new());
        for ax in o.axioms() {
            names(&ax.sub, &mut cs, &mut rs);
            names(&ax.sup, &mut cs, &mut rs);
        }
        let got_c: BTreeSet<String> = o.concept_names().iter().map(|i| i.to_string()).collect();
        let got_r: BTreeSet<String> = o.role_names().iter().map(|i| i.to_string()).collect();
        prop_assert_eq!(got_c, cs);
        prop_assert_eq!(got_r, rs);
    }

    #[test]
    fn normalizer_output_is_normal_and_verbalizable(o in ontology_strategy()) {
        let n = normalize(&o);
        for ax in &n.axioms {
            let back = NormalizedAxiom::from_axiom(&ax.to_axiom());
            prop_assert_eq!(back.as_ref(), Some(ax));
        }
        let mut labels = ont_core::LabelMap::default();
        for c in o.concept_names() {
            labels.insert_concept(c.clone(), c.as_str().trim_start_matches(':'));
        }
        for r in o.role_names() {
            labels.insert_role(r.clone(), r.as_str().trim_start_matches(':'));
        }
        for fresh in n.fresh_names() {
            prop_assert!(!o.concept_names().contains(fresh));
            prop_assert!(verbalize(&Concept::Atomic(fresh.clone()), &labels, &n.definitions).is_ok());
        }
        // shared subterms get one name: definitions are pairwise distinct
        let defs: BTreeSet<_> = n.definitions.values().collect();
        prop_assert_eq!(defs.len(), n.definitions.len());
    }

    #[test]
    fn normalizer_is_idempotent(o in ontology_strategy()) {
        let once = normalize(&o);
        let again = normalize(&Ontology::new(once.axioms.iter().map(|a| a.to_axiom()).collect()));
        prop_assert_eq!(again.axioms, once.axioms);
        prop_assert!(again.definitions.is_empty());
    }

    #[test]
    fn reasoner_is_monotone(o in ontology_strategy(), extra in (concept_strategy(), concept_strategy())) {
        let base = normalize(&o).axioms;
        let mut more = o.axioms().to_vec();
        more.push(Axiom::new(extra.0, extra.1));
        let bigger = normalize(&Ontology::new(more)).axioms;
        let (c1, c2) = (saturate(&base), saturate(&bigger));
        for a in c1.atoms() {
            prop_assert!(c1.subsumers(a).is_subset(&c2.subsumers(a)));
        }
    }

    #[test]
    fn nf1_closure_is_transitive_closure(edges in prop::collection::vec((0..8usize, 0..8usize), 0..50)) {
        let ax: Vec<_> = edges
            .iter()
            .map(|&(a, b)| NormalizedAxiom::nf1(Atom::named(&format!(":C{a}")), Atom::named(&format!(":C{b}"))))
            .collect();
        let sig: BTreeSet<Atom> = (0..8).map(|i| Atom::named(&format!(":C{i}"))).collect();
        let filter = EntailmentFilter { exclude_asserted: false, exclude_top: true };
        let got: BTreeSet<_> = entailed_nf1(&ax, &sig, &filter).into_iter().collect();
        // Warshall
        let mut reach = [[false; 8]; 8];
        for &(a, b) in &edges {
            reach[a][b] = true;
        }
        for k in 0..8 {
            for i in 0..8 {
                for j in 0..8 {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let want: BTreeSet<_> = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && reach[i][j])
            .map(|(i, j)| NormalizedAxiom::nf1(Atom::named(&format!(":C{i}")), Atom::named(&format!(":C{j}"))))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn rotation_is_an_isometry(
        (x, y) in prop_oneof![Just(0.25), Just(1.0), Just(4.0)]
            .prop_flat_map(|k| {
                let spec = BallSpec::new(6, k, 1e-5).unwrap();
                (point(spec), point(spec))
            }),
        theta in prop::collection::vec(-7.0..7.0f64, 3),
    ) {
        let theta = RotationAngles(theta);
        let (rx, ry) = (hrotate(&theta, &x).unwrap(), hrotate(&theta, &y).unwrap());
        let d = hdist(&x, &y).unwrap();
        prop_assert!((hdist(&rx, &ry).unwrap() - d).abs() <= 1e-9 * (1.0 + d));
        prop_assert!((rx.euclidean_norm() - x.euclidean_norm()).abs() <= 1e-12 * (1.0 + x.euclidean_norm()));
    }

    #[test]
    fn triangle_inequality(x in point(BallSpec::unit(4)), y in point(BallSpec::unit(4)), z in point(BallSpec::unit(4))) {
        let (xy, yz, xz) = (hdist(&x, &y).unwrap(), hdist(&y, &z).unwrap(), hdist(&x, &z).unwrap());
        prop_assert!(xz <= xy + yz + 1e-9 * (1.0 + xz));
        prop_assert!((xy - hdist(&y, &x).unwrap()).abs() <= 1e-12 * (1.0 + xy));
    }

    #[test]
    fn hnorm_is_distance_to_origin(x in point(BallSpec::new(4, 2.0, 1e-5).unwrap())) {
        let o = PoincarePoint::origin(x.spec());
        prop_assert_eq!(hnorm(&x).to_bits(), hdist(&x, &o).unwrap().to_bits());
    }

    #[test]
    fn scaling_composes(v in prop::collection::vec(-1.0..1.0f64, 4), k1 in 0.2..1.5f64, k2 in 0.2..1.5f64) {
        // moderate norms keep both sides away from the boundary clamp
        let spec = BallSpec::unit(4);
        let x = ont_core::geometry::project_to_ball(&v, spec).unwrap();
        prop_assume!(hnorm(&x) * k1 * k2 < 8.0 && hnorm(&x) * k2 < 8.0);
        let lhs = hscale(k1, &hscale(k2, &x));
        let rhs = hscale(k1 * k2, &x);
        for (a, b) in lhs.coords().iter().zip(rhs.coords()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // the hyperbolic norm scales linearly
        prop_assert!((hnorm(&rhs) - k1 * k2 * hnorm(&x)).abs() < 1e-7 * (1.0 + hnorm(&rhs)));
    }

    #[test]
    fn mean_pooling_ignores_token_order(ids in prop::collection::vec(0..6usize, 1..8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = EncoderParams::init(6, 3, 4, 0.5, &mut rng);
        let mut rev = ids.clone();
        rev.reverse();
        rev.rotate_left(ids.len() / 2);
        let (a, b) = (p.raw_vector(&ids), p.raw_vector(&rev));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let spec = BallSpec::unit(4);
        prop_assert_eq!(raw::project(&a, &spec).len(), 4);
    }

    #[test]
    fn metrics_ignore_order(mut ranks in prop::collection::vec(1..50usize, 1..30)) {
        let a = compute_metrics(&ranks).unwrap();
        ranks.reverse();
        let b = compute_metrics(&ranks).unwrap();
        prop_assert!((a.mrr - b.mrr).abs() < 1e-12);
        prop_assert!((a.mean_rank - b.mean_rank).abs() < 1e-12);
        prop_assert_eq!((a.hits_at_1, a.hits_at_10, a.hits_at_100), (b.hits_at_1, b.hits_at_10, b.hits_at_100));
    }

    #[test]
    fn unit_scale_role_keeps_scores(
        c in point(BallSpec::unit(4)),
        d in point(BallSpec::unit(4)),
        theta in prop::collection::vec(-3.2..3.2f64, 2),
    ) {
        let angles = RotationAngles(theta);
        let (rc, rd) = (hrotate(&angles, &c).unwrap(), hrotate(&angles, &d).unwrap());
        for i in 0..=10 {
            let l = i as f64 / 10.0;
            let s = score_points(c.coords(), d.coords(), 1.0, l);
            let t = score_points(rc.coords(), rd.coords(), 1.0, l);
            prop_assert!((s - t).abs() <= 1e-9);
        }
    }
}

#[test]
fn rank_agrees_with_sorting() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        use rand::Rng;
        let n = rng.gen_range(1..20);
        let others: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
        let truth = rng.gen_range(0..5) as f64;
        let mut all: Vec<(f64, bool)> = others.iter().map(|&s| (s, false)).collect();
        all.push((truth, true));
        // pessimistic: the truth is placed after every equal score
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let pos = all.iter().position(|x| x.1).unwrap() + 1;
        assert_eq!(rank_from_scores(truth, &others), pos);
    }
}
