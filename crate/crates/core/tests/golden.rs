use std::collections::BTreeSet;

use casts_core::composition::{explore, DEFAULT_BOUND};
use casts_core::dependency::{
    analyze_pairs, apply_selection, extended_label_dependencies, pairs_label_dependencies, Choice, DependencySet,
    LabelDependency, Order,
};
use casts_core::scenario::{fixtures, parse_dependency_set};
use casts_core::verification::{label_dependency_verification, ConflictKind};

fn deps(items: &[&str]) -> BTreeSet<LabelDependency> {
    items.iter().map(|s| LabelDependency::parse(s).unwrap()).collect()
}

#[test]
fn road_info_pairs_and_extension() {
    let s = fixtures::road_info();
    let (ac, mc) = (s.client(&"ac".into()).unwrap(), s.client(&"mc".into()).unwrap());
    let cands = analyze_pairs(ac, mc, &s.ontology).unwrap();
    let pairs: Vec<String> = cands.iter().map(|c| format!("{} {}", c.pair.left, c.pair.right)).collect();
    assert_eq!(pairs, ["ac:l_ac4 mc:l_mc4", "ac:l_ac5 mc:l_mc5"]);

    let ld = apply_selection(
        &cands.iter().map(|c| c.pair.clone()).collect(),
        &[Choice {
            index: 0,
            order: Order::LeftFirst,
        }],
    )
    .unwrap();
    assert_eq!(ld, deps(&["ac:l_ac4 > mc:l_mc4"]));
    let ext = extended_label_dependencies(ac, mc, &ld).unwrap();
    assert_eq!(
        ext,
        deps(&[
            "ac:l_ac1 > mc:l_mc4",
            "ac:l_ac2 > mc:l_mc4",
            "ac:l_ac3 > mc:l_mc4",
            "ac:l_ac4 > mc:l_mc4"
        ])
    );
    assert!(label_dependency_verification(ac, mc, &ext).unwrap().is_empty());

    match parse_dependency_set(fixtures::ROAD_INFO_EXTENDED).unwrap() {
        DependencySet::Extended(d) => assert_eq!(d, ext),
        other => panic!("{other:?}"),
    }
    match parse_dependency_set(fixtures::ROAD_INFO_SELECTED).unwrap() {
        DependencySet::Selected(d) => assert_eq!(d, ld),
        other => panic!("{other:?}"),
    }

    let sys = s.system(&ext).unwrap();
    let r = explore(&sys, DEFAULT_BOUND).unwrap();
    assert!(!r.truncated);
    assert!(r.deadlocks.is_empty(), "{:?}", r.summary());
    assert!(!r.completions.is_empty());
}

#[test]
fn planning_hotel_deadlocks() {
    let s = fixtures::planning_hotel();
    let (pc, hc) = (s.client(&"pc".into()).unwrap(), s.client(&"hc".into()).unwrap());
    let cands = analyze_pairs(pc, hc, &s.ontology).unwrap();
    let pairs: Vec<String> = cands.iter().map(|c| format!("{} {}", c.pair.left, c.pair.right)).collect();
    assert_eq!(pairs, ["pc:l_ps1 hc:l_hs2", "pc:l_ps2 hc:l_hs1"]);
    assert_eq!(pairs_label_dependencies(pc, hc, &s.ontology).unwrap().len(), 2);

    let ld = apply_selection(
        &cands.iter().map(|c| c.pair.clone()).collect(),
        &[
            Choice {
                index: 0,
                order: Order::RightFirst,
            },
            Choice {
                index: 1,
                order: Order::LeftFirst,
            },
        ],
    )
    .unwrap();
    assert_eq!(ld, deps(&["hc:l_hs2 > pc:l_ps1", "pc:l_ps2 > hc:l_hs1"]));
    let ext = extended_label_dependencies(pc, hc, &ld).unwrap();
    assert_eq!(
        ext,
        deps(&[
            "hc:l_hs1 > pc:l_ps1",
            "hc:l_hs2 > pc:l_ps1",
            "pc:l_ps1 > hc:l_hs1",
            "pc:l_ps2 > hc:l_hs1"
        ])
    );
    let report = label_dependency_verification(pc, hc, &ext).unwrap();
    assert_eq!(report.kinds(), [ConflictKind::Mutual, ConflictKind::Crossed].into());
    let pairs = report.pairs();
    assert!(pairs.contains(&(
        LabelDependency::parse("hc:l_hs1 > pc:l_ps1").unwrap(),
        LabelDependency::parse("pc:l_ps1 > hc:l_hs1").unwrap()
    )));

    let r = explore(&s.system(&ext).unwrap(), DEFAULT_BOUND).unwrap();
    assert_eq!(r.completions.len(), 0);
    assert!(r.deadlocks.contains(&0));
}
