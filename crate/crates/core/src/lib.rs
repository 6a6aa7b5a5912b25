//! Context-aware symbolic transition systems: protocol model, operational
//! semantics, ontology-based dependency analysis, deadlock verification and
//! exploration of client compositions against services.

pub mod composition;
pub mod dependency;
pub mod model;
pub mod ontology;
pub mod scenario;
pub mod semantics;
pub mod session;
pub mod verification;
