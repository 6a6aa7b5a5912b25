use std::collections::BTreeSet;

use casts_core::dependency::{
    analyze_pairs, apply_selection, extended_label_dependencies, Choice, DependencySet, LabelDependency, LabelPair,
    Order,
};
use casts_core::model::{Expression, Label, Protocol, ProtocolBuilder, QualifiedLabel, Variable};
use casts_core::ontology::Ontology;
use casts_core::scenario::{dependency_set_to_text, parse_dependency_set, serialize_dependency_set};
use casts_core::verification::{label_dependency_verification, ConflictKind};
use proptest::prelude::*;

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// Tau labels on an arbitrary graph over `states` states.
fn graph(id: &'static str) -> impl Strategy<Value = Protocol> {
    (1usize..6).prop_flat_map(move |n| {
        (
            Just(n),
            0..n,
            prop::collection::vec((0..n, 0..LABELS.len(), 0..n), 0..12),
        )
            .prop_map(move |(n, fin, edges)| {
                let mut b = ProtocolBuilder::new(id, "s0");
                for s in 0..n {
                    b = b.state(format!("s{s}"));
                }
                b = b.final_state(format!("s{fin}"));
                for l in LABELS {
                    b = b.label(Label::tau(l));
                }
                for (f, l, t) in edges {
                    b = b.transition(format!("s{f}"), LABELS[l], format!("s{t}"));
                }
                b.build()
            })
    })
}

/// A straight line through every label once, in the given order.
fn chain(id: &'static str) -> impl Strategy<Value = Protocol> {
    Just(LABELS.to_vec()).prop_shuffle().prop_map(move |order| {
        let mut b = ProtocolBuilder::new(id, "s0").final_state(format!("s{}", order.len()));
        for (i, l) in order.iter().enumerate() {
            b = b
                .state(format!("s{i}"))
                .label(Label::tau(*l))
                .transition(format!("s{i}"), *l, format!("s{}", i + 1));
        }
        b.state(format!("s{}", order.len())).build()
    })
}

fn q(p: &str, l: &str) -> QualifiedLabel {
    QualifiedLabel::parse(&format!("{p}:{l}")).unwrap()
}

/// Dependencies between `p` and `q` in either direction.
fn deps() -> impl Strategy<Value = BTreeSet<LabelDependency>> {
    prop::collection::btree_set((0..LABELS.len(), 0..LABELS.len(), any::<bool>()), 0..6).prop_map(|raw| {
        raw.into_iter()
            .map(|(a, b, pq)| {
                if pq {
                    LabelDependency::new(q("p", LABELS[a]), q("q", LABELS[b]))
                } else {
                    LabelDependency::new(q("q", LABELS[b]), q("p", LABELS[a]))
                }
            })
            .collect()
    })
}

fn ontology() -> Ontology {
    let names: BTreeSet<String> = ["Thing", "x", "y", "z", "w"].map(String::from).into();
    Ontology::new(
        "o",
        names,
        [("x", "Thing"), ("y", "x"), ("z", "Thing"), ("w", "z")].map(|(c, p)| (c.to_owned(), p.to_owned())),
    )
    .unwrap()
}

/// Emissions or receptions, each with one or two arguments drawn from the
/// ontology's concepts and two types.
fn messaging(id: &'static str, emit: bool) -> impl Strategy<Value = Protocol> {
    let args = (prop::sample::subsequence(vec!["x", "y", "z", "w"], 1..3), any::<bool>()).prop_map(|(names, int)| {
        names
            .into_iter()
            .map(|n| Expression::var(Variable::regular(n, if int { "int" } else { "string" })))
            .collect::<Vec<_>>()
    });
    prop::collection::vec(args, 1..5).prop_map(move |labels| {
        let n = labels.len();
        let mut b = ProtocolBuilder::new(id, "s0").final_state(format!("s{n}"));
        for (i, args) in labels.into_iter().enumerate() {
            let l = if emit {
                Label::emission(format!("l{i}"), format!("op{i}"), args)
            } else {
                Label::reception(format!("l{i}"), format!("op{i}"), args)
            };
            b = b
                .state(format!("s{i}"))
                .label(l)
                .transition(format!("s{i}"), format!("l{i}"), format!("s{}", i + 1));
        }
        b.state(format!("s{n}")).build()
    })
}

proptest! {
    #[test]
    fn candidate_pairs_are_symmetric(p1 in messaging("p", true), p2 in messaging("q", false)) {
        let o = ontology();
        let forward: BTreeSet<LabelPair> = analyze_pairs(&p1, &p2, &o).unwrap().into_iter().map(|c| c.pair).collect();
        let backward: BTreeSet<LabelPair> = analyze_pairs(&p2, &p1, &o).unwrap().into_iter().map(|c| c.pair.mirrored()).collect();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn selection_orients_each_chosen_pair(p1 in messaging("p", true), p2 in messaging("q", false), flips in prop::collection::vec(any::<bool>(), 0..8)) {
        let pairs: BTreeSet<LabelPair> = analyze_pairs(&p1, &p2, &ontology()).unwrap().into_iter().map(|c| c.pair).collect();
        let choices: Vec<Choice> = flips.iter().take(pairs.len()).enumerate()
            .map(|(index, &l)| Choice { index, order: if l { Order::LeftFirst } else { Order::RightFirst } })
            .collect();
        let ld = apply_selection(&pairs, &choices).unwrap();
        prop_assert_eq!(ld.len(), choices.len());
        for (c, pair) in choices.iter().zip(&pairs) {
            let want = match c.order {
                Order::LeftFirst => LabelDependency::new(pair.left.clone(), pair.right.clone()),
                Order::RightFirst => LabelDependency::new(pair.right.clone(), pair.left.clone()),
            };
            prop_assert!(ld.contains(&want));
        }
    }

    #[test]
    fn extension_keeps_selection_and_dominated_labels(p1 in graph("p"), p2 in graph("q"), ld in deps()) {
        let ext = extended_label_dependencies(&p1, &p2, &ld).unwrap();
        prop_assert!(ext.is_superset(&ld));
        let dominated: BTreeSet<_> = ld.iter().map(|d| &d.dominated).collect();
        prop_assert!(ext.iter().all(|d| dominated.contains(&d.dominated)));
    }

    #[test]
    fn extension_is_idempotent_on_chains(p1 in chain("p"), p2 in chain("q"), ld in deps()) {
        let once = extended_label_dependencies(&p1, &p2, &ld).unwrap();
        let twice = extended_label_dependencies(&p1, &p2, &once).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn one_way_dependencies_never_conflict(p1 in graph("p"), p2 in graph("q"), ld in deps()) {
        let one_way: BTreeSet<_> = ld.into_iter().filter(|d| d.dominant.protocol.as_str() == "p").collect();
        let r = label_dependency_verification(&p1, &p2, &one_way).unwrap();
        prop_assert!(r.conflicts.is_empty(), "{:?}", r);
    }

    #[test]
    fn a_reversed_pair_is_mutual(p1 in graph("p"), p2 in graph("q"), a in 0..LABELS.len(), b in 0..LABELS.len()) {
        let d = LabelDependency::new(q("p", LABELS[a]), q("q", LABELS[b]));
        let ld = BTreeSet::from([d.clone(), d.reversed()]);
        let r = label_dependency_verification(&p1, &p2, &ld).unwrap();
        prop_assert_eq!(r.kinds(), BTreeSet::from([ConflictKind::Mutual]));
        prop_assert_eq!(r.conflicts.len(), 1);
    }

    #[test]
    fn dependency_sets_round_trip(ld in deps(), extended in any::<bool>()) {
        let ds = if extended { DependencySet::Extended(ld) } else { DependencySet::Selected(ld) };
        prop_assert_eq!(&parse_dependency_set(&serialize_dependency_set(&ds)).unwrap(), &ds);
        prop_assert_eq!(&parse_dependency_set(&dependency_set_to_text(&ds)).unwrap(), &ds);
    }
}
