//! Concept hierarchy and semantic degree of match between concepts.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Degree of match between an output concept and an input concept, from
/// best to worst: exact, plugIn, subsume, fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MatchDegree {
    Fail,
    Subsume,
    PlugIn,
    Exact,
}

impl fmt::Display for MatchDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchDegree::Exact => "exact",
            MatchDegree::PlugIn => "plugIn",
            MatchDegree::Subsume => "subsume",
            MatchDegree::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OntologyError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("subclassOf cycle through `{0}`")]
    Cycle(String),
}

/// An acyclic subclass hierarchy (multiple inheritance allowed).
#[derive(Debug, Clone)]
pub struct Ontology {
    name: String,
    concepts: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
    /// Reflexive-transitive ancestors of every concept.
    ancestors: HashMap<String, HashSet<String>>,
}

impl PartialEq for Ontology {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.concepts == other.concepts && self.edges == other.edges
    }
}

impl Eq for Ontology {}

impl Ontology {
    /// Builds an ontology from concepts and `(child, parent)` edges.
    pub fn new(
        name: impl Into<String>,
        concepts: impl IntoIterator<Item = String>,
        subclass_of: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Ontology, OntologyError> {
        let concepts: BTreeSet<String> = concepts.into_iter().collect();
        let edges: BTreeSet<(String, String)> = subclass_of.into_iter().collect();
        for (c, p) in &edges {
            for x in [c, p] {
                if !concepts.contains(x) {
                    return Err(OntologyError::UnknownConcept(x.clone()));
                }
            }
        }
        let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
        for (c, p) in &edges {
            parents.entry(c.as_str()).or_default().push(p.as_str());
        }
        let mut ancestors = HashMap::new();
        for c in &concepts {
            let mut seen: HashSet<String> = HashSet::new();
            let mut stack = vec![c.as_str()];
            while let Some(x) = stack.pop() {
                if !seen.insert(x.to_owned()) {
                    continue;
                }
                for p in parents.get(x).into_iter().flatten() {
                    if *p == c {
                        return Err(OntologyError::Cycle(c.clone()));
                    }
                    stack.push(p);
                }
            }
            ancestors.insert(c.clone(), seen);
        }
        Ok(Ontology {
            name: name.into(),
            concepts,
            edges,
            ancestors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn concepts(&self) -> &BTreeSet<String> {
        &self.concepts
    }

    /// `(child, parent)` pairs.
    pub fn subclass_of(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.contains(concept)
    }

    fn is_ancestor(&self, ancestor: &str, descendant: &str) -> bool {
        self.ancestors
            .get(descendant)
            .is_some_and(|a| a.contains(ancestor))
    }

    /// True iff `descendant` reaches `ancestor` through zero or more
    /// subclassOf edges.
    pub fn subsumes(&self, ancestor: &str, descendant: &str) -> Result<bool, OntologyError> {
        for c in [ancestor, descendant] {
            if !self.contains(c) {
                return Err(OntologyError::UnknownConcept(c.to_owned()));
            }
        }
        Ok(self.is_ancestor(ancestor, descendant))
    }

    /// Degree of match of an output concept against an input concept:
    /// exact when equal or `out` is a direct subclass of `input`, plugIn when
    /// `input` is a more distant ancestor of `out`, subsume when `out` is a
    /// strict ancestor of `input`, fail otherwise (including unknown concepts).
    pub fn degree_match(&self, out: &str, input: &str) -> MatchDegree {
        if !self.contains(out) || !self.contains(input) {
            log::debug!("degree_match({out}, {input}): unknown concept");
            return MatchDegree::Fail;
        }
        if out == input || self.edges.contains(&(out.to_owned(), input.to_owned())) {
            MatchDegree::Exact
        } else if self.is_ancestor(input, out) {
            MatchDegree::PlugIn
        } else if self.is_ancestor(out, input) {
            MatchDegree::Subsume
        } else {
            MatchDegree::Fail
        }
    }
}
