//! Scenario files bundled with the crate.

use super::{parse_scenario_with, ScenarioError, Scenario};

pub const ROAD_INFO: &str = include_str!("../../fixtures/road-info.casts.xml");
pub const ROAD_INFO_ONTOLOGY: &str = include_str!("../../fixtures/road-info.ont.xml");
pub const ROAD_INFO_SELECTED: &str = include_str!("../../fixtures/road-info.selected.deps.xml");
pub const ROAD_INFO_EXTENDED: &str = include_str!("../../fixtures/road-info.extended.deps.xml");
pub const PLANNING_HOTEL: &str = include_str!("../../fixtures/planning-hotel.casts.xml");
pub const PLANNING_HOTEL_ONTOLOGY: &str = include_str!("../../fixtures/planning-hotel.ont.xml");
pub const PLANNING_HOTEL_SELECTED: &str = include_str!("../../fixtures/planning-hotel.selected.deps.xml");
pub const PLANNING_HOTEL_EXTENDED: &str = include_str!("../../fixtures/planning-hotel.extended.deps.xml");
pub const LOOP: &str = include_str!("../../fixtures/loop.casts.xml");
pub const TYPE_MISMATCH: &str = include_str!("../../fixtures/type-mismatch.casts.xml");
pub const DISJOINT: &str = include_str!("../../fixtures/disjoint.casts.xml");

/// `(file name, contents)` of every bundled file.
pub const ALL: &[(&str, &str)] = &[
    ("road-info.casts.xml", ROAD_INFO),
    ("road-info.ont.xml", ROAD_INFO_ONTOLOGY),
    ("road-info.selected.deps.xml", ROAD_INFO_SELECTED),
    ("road-info.extended.deps.xml", ROAD_INFO_EXTENDED),
    ("planning-hotel.casts.xml", PLANNING_HOTEL),
    ("planning-hotel.ont.xml", PLANNING_HOTEL_ONTOLOGY),
    ("planning-hotel.selected.deps.xml", PLANNING_HOTEL_SELECTED),
    ("planning-hotel.extended.deps.xml", PLANNING_HOTEL_EXTENDED),
    ("loop.casts.xml", LOOP),
    ("type-mismatch.casts.xml", TYPE_MISMATCH),
    ("disjoint.casts.xml", DISJOINT),
];

/// Looks a referenced file up among the bundled ones.
pub fn resolve(name: &str) -> Result<String, ScenarioError> {
    ALL.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| (*c).to_owned())
        .ok_or_else(|| ScenarioError::Reference(format!("no bundled file `{name}`")))
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(text, &resolve)
}

pub fn road_info() -> Scenario {
    parse(ROAD_INFO).expect("bundled road-info scenario")
}

pub fn planning_hotel() -> Scenario {
    parse(PLANNING_HOTEL).expect("bundled planning-hotel scenario")
}

pub fn looping() -> Scenario {
    parse(LOOP).expect("bundled loop scenario")
}

pub fn type_mismatch() -> Scenario {
    parse(TYPE_MISMATCH).expect("bundled type-mismatch scenario")
}

pub fn disjoint() -> Scenario {
    parse(DISJOINT).expect("bundled disjoint scenario")
}
