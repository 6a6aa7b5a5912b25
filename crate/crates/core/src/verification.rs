//! Deadlock patterns in a label-dependency set: mutual exclusion
//! `(a > b), (b > a)` and crossed dependencies, where each dominated label
//! precedes the other dependency's dominant label in its own protocol.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::dependency::{resolve, DependencyError, LabelDependency};
use crate::model::{LabelId, Protocol, QualifiedLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ConflictKind {
    Mutual,
    Crossed,
}

impl ConflictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConflictKind::Mutual => "mutual",
            ConflictKind::Crossed => "crossed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mutual" => Some(ConflictKind::Mutual),
            "crossed" => Some(ConflictKind::Crossed),
            _ => None,
        }
    }
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two dependencies that cannot both be honoured. `first < second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub first: LabelDependency,
    pub second: LabelDependency,
}

impl Conflict {
    pub fn explanation(&self) -> String {
        let (a, b) = (&self.first, &self.second);
        match self.kind {
            ConflictKind::Mutual => format!(
                "{a} and {b} are in mutual exclusion: each label waits for the other"
            ),
            ConflictKind::Crossed => format!(
                "{a} and {b} are crossed: {} must run before {} and {} before {}, \
                 but {} precedes {} and {} precedes {}",
                a.dominant, a.dominated, b.dominant, b.dominated, b.dominated, a.dominant, a.dominated,
                b.dominant
            ),
        }
    }

    pub fn labels(&self) -> BTreeSet<&QualifiedLabel> {
        [
            &self.first.dominant,
            &self.first.dominated,
            &self.second.dominant,
            &self.second.dominated,
        ]
        .into_iter()
        .collect()
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ({}), ({})", self.kind, self.first, self.second)
    }
}

/// A dominance cycle through three or more labels. Not part of the deadlocked
/// set; reported so users can inspect it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainWarning {
    pub labels: Vec<QualifiedLabel>,
}

impl fmt::Display for ChainWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.labels.iter().map(ToString::to_string).collect();
        write!(f, "dominance cycle through {}", names.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockReport {
    pub conflicts: Vec<Conflict>,
    #[serde(default)]
    pub chain_warnings: Vec<ChainWarning>,
}

impl DeadlockReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    pub fn kinds(&self) -> BTreeSet<ConflictKind> {
        self.conflicts.iter().map(|c| c.kind).collect()
    }

    pub fn pairs(&self) -> BTreeSet<(LabelDependency, LabelDependency)> {
        self.conflicts
            .iter()
            .map(|c| (c.first.clone(), c.second.clone()))
            .collect()
    }

    /// Plain-text block used by the CLI.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.conflicts.is_empty() {
            s.push_str("no inconsistencies\n");
        } else {
            s.push_str(&format!("{} deadlocked pair(s)\n", self.conflicts.len()));
            for c in &self.conflicts {
                s.push_str(&format!("  {c}\n    {}\n", c.explanation()));
            }
        }
        for w in &self.chain_warnings {
            s.push_str(&format!("  warning: {w}\n"));
        }
        s
    }
}

fn previous(
    q: &QualifiedLabel,
    protocols: &[&Protocol],
    cache: &mut BTreeMap<QualifiedLabel, BTreeSet<LabelId>>,
) -> Result<BTreeSet<LabelId>, DependencyError> {
    if let Some(s) = cache.get(q) {
        return Ok(s.clone());
    }
    let p = resolve(q, protocols)?;
    let s = p.previous_labels(&q.label)?;
    cache.insert(q.clone(), s.clone());
    Ok(s)
}

/// `x` precedes `y` in their common protocol.
fn precedes(
    x: &QualifiedLabel,
    y: &QualifiedLabel,
    protocols: &[&Protocol],
    cache: &mut BTreeMap<QualifiedLabel, BTreeSet<LabelId>>,
) -> Result<bool, DependencyError> {
    Ok(x.protocol == y.protocol && previous(y, protocols, cache)?.contains(&x.label))
}

/// Checks every unordered pair of distinct dependencies of `ld`.
pub fn label_dependency_verification(
    p1: &Protocol,
    p2: &Protocol,
    ld: &BTreeSet<LabelDependency>,
) -> Result<DeadlockReport, DependencyError> {
    verify_in(&[p1, p2], ld)
}

/// Same as [`label_dependency_verification`] over any number of protocols.
pub fn verify_in(protocols: &[&Protocol], ld: &BTreeSet<LabelDependency>) -> Result<DeadlockReport, DependencyError> {
    for d in ld {
        resolve(&d.dominant, protocols)?;
        resolve(&d.dominated, protocols)?;
    }
    let deps: Vec<&LabelDependency> = ld.iter().collect();
    let mut cache = BTreeMap::new();
    let mut conflicts = Vec::new();
    for (i, ldp) in deps.iter().enumerate() {
        for ldg in &deps[i + 1..] {
            let kind = if ldp.dominant == ldg.dominated && ldp.dominated == ldg.dominant {
                Some(ConflictKind::Mutual)
            } else if precedes(&ldg.dominated, &ldp.dominant, protocols, &mut cache)?
                && precedes(&ldp.dominated, &ldg.dominant, protocols, &mut cache)?
            {
                Some(ConflictKind::Crossed)
            } else {
                None
            };
            if let Some(kind) = kind {
                conflicts.push(Conflict {
                    kind,
                    first: (*ldp).clone(),
                    second: (*ldg).clone(),
                });
            }
        }
    }
    Ok(DeadlockReport {
        conflicts,
        chain_warnings: chain_warnings(ld),
    })
}

/// Strongly connected components of the dominance graph with more than two
/// labels.
pub fn chain_warnings(ld: &BTreeSet<LabelDependency>) -> Vec<ChainWarning> {
    let mut g: DiGraph<&QualifiedLabel, ()> = DiGraph::new();
    let mut nodes = BTreeMap::new();
    for d in ld {
        for q in [&d.dominant, &d.dominated] {
            nodes.entry(q).or_insert_with(|| g.add_node(q));
        }
        g.add_edge(nodes[&d.dominant], nodes[&d.dominated], ());
    }
    let mut out: Vec<ChainWarning> = tarjan_scc(&g)
        .into_iter()
        .filter(|c| c.len() > 2)
        .map(|c| {
            let mut labels: Vec<QualifiedLabel> = c.iter().map(|n| g[*n].clone()).collect();
            labels.sort();
            ChainWarning { labels }
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, ProtocolBuilder};

    fn dep(s: &str) -> LabelDependency {
        LabelDependency::parse(s).unwrap()
    }

    fn linear(id: &str, labels: &[&str]) -> Protocol {
        let mut b = ProtocolBuilder::new(id, "0");
        for (i, l) in labels.iter().enumerate() {
            b = b.label(Label::tau(*l)).transition(i.to_string(), *l, (i + 1).to_string());
        }
        b.final_state(labels.len().to_string()).build()
    }

    #[test]
    fn mutual_and_crossed() {
        let p = linear("p", &["a1", "a2"]);
        let q = linear("q", &["b1", "b2"]);
        let ld = BTreeSet::from([dep("p:a1 > q:b1"), dep("q:b1 > p:a1")]);
        let r = label_dependency_verification(&p, &q, &ld).unwrap();
        assert_eq!(r.kinds(), BTreeSet::from([ConflictKind::Mutual]));
        let ld = BTreeSet::from([dep("p:a2 > q:b1"), dep("q:b2 > p:a1")]);
        let r = label_dependency_verification(&p, &q, &ld).unwrap();
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!(r.conflicts[0].kind, ConflictKind::Crossed);
        let ld = BTreeSet::from([dep("p:a1 > q:b2"), dep("q:b1 > p:a2")]);
        assert!(label_dependency_verification(&p, &q, &ld).unwrap().is_empty());
    }

    #[test]
    fn single_or_empty_sets_are_clean() {
        let p = linear("p", &["a"]);
        let q = linear("q", &["b"]);
        assert!(label_dependency_verification(&p, &q, &BTreeSet::new()).unwrap().is_empty());
        let ld = BTreeSet::from([dep("p:a > q:b")]);
        assert!(label_dependency_verification(&p, &q, &ld).unwrap().is_empty());
        let ld = BTreeSet::from([dep("p:zz > q:b")]);
        assert!(label_dependency_verification(&p, &q, &ld).is_err());
    }

    #[test]
    fn chains_are_warnings_only() {
        let p = linear("p", &["a"]);
        let q = linear("q", &["b"]);
        let r = linear("r", &["c"]);
        let ld = BTreeSet::from([dep("p:a > q:b"), dep("q:b > r:c"), dep("r:c > p:a")]);
        let rep = verify_in(&[&p, &q, &r], &ld).unwrap();
        assert!(rep.is_empty());
        assert_eq!(rep.chain_warnings.len(), 1);
        assert_eq!(rep.chain_warnings[0].labels.len(), 3);
    }
}
