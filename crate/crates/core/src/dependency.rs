//! Data-dependency analysis between two concurrently running protocols:
//! candidate label pairs from semantic argument matching, the user's
//! selection and ordering of those pairs, and the extension of the selected
//! dependencies to every label preceding a dominant label.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{validate_protocol, Argument, ModelError, Protocol, ProtocolId, QualifiedLabel};
use crate::ontology::{MatchDegree, Ontology};

/// An unordered candidate: two labels of different protocols whose
/// arguments match semantically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelPair {
    pub left: QualifiedLabel,
    pub right: QualifiedLabel,
}

impl LabelPair {
    pub fn mirrored(&self) -> LabelPair {
        LabelPair {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

impl fmt::Display for LabelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.left, self.right)
    }
}

/// `dominant > dominated`: the dominant label must execute before the
/// dominated one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelDependency {
    pub dominant: QualifiedLabel,
    pub dominated: QualifiedLabel,
}

impl LabelDependency {
    pub fn new(dominant: QualifiedLabel, dominated: QualifiedLabel) -> Self {
        Self { dominant, dominated }
    }

    /// Parses `p:l > q:m`.
    pub fn parse(s: &str) -> Option<Self> {
        let (a, b) = s.split_once('>')?;
        Some(Self::new(QualifiedLabel::parse(a)?, QualifiedLabel::parse(b)?))
    }

    pub fn reversed(&self) -> LabelDependency {
        LabelDependency::new(self.dominated.clone(), self.dominant.clone())
    }
}

impl fmt::Display for LabelDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} > {}", self.dominant, self.dominated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Order {
    /// The pair's left label dominates.
    LeftFirst,
    RightFirst,
}

/// One user decision: keep candidate number `index` with the given order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Choice {
    pub index: usize,
    pub order: Order,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DependencyError {
    #[error("protocol `{protocol}` is not well formed: {diagnostics}")]
    Invalid { protocol: ProtocolId, diagnostics: String },
    #[error("both protocols are `{0}`")]
    SameProtocol(ProtocolId),
    #[error("choice index {index} out of range ({len} candidates)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("candidate {0} chosen twice")]
    DuplicateChoice(usize),
    #[error("label `{0}` does not resolve in the analysed protocols")]
    Unresolved(QualifiedLabel),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A matched argument pair supporting a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentMatch {
    pub left: String,
    pub right: String,
    pub degree: MatchDegree,
}

/// A candidate pair with the evidence that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub pair: LabelPair,
    pub matches: Vec<ArgumentMatch>,
}

fn ensure_valid(p: &Protocol) -> Result<(), DependencyError> {
    let d = validate_protocol(p);
    if d.is_empty() {
        Ok(())
    } else {
        Err(DependencyError::Invalid {
            protocol: p.id.clone(),
            diagnostics: d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        })
    }
}

/// Arguments that can carry shared data: context variables are read from
/// the device context at reception time and never create a dependency.
fn data_arguments(payload: &[Argument]) -> impl Iterator<Item = &Argument> {
    payload.iter().filter(|a| !a.is_context())
}

fn argument_match(a1: &Argument, a2: &Argument, ont: &Ontology) -> Option<MatchDegree> {
    let (c1, c2) = (a1.concept()?, a2.concept()?);
    let (t1, t2) = (a1.ty()?, a2.ty()?);
    if t1 != t2 {
        return None;
    }
    let d = ont.degree_match(c1, c2);
    (d != MatchDegree::Fail).then_some(d)
}

/// Candidate pairs with their matched arguments, ordered by `(left, right)`.
pub fn analyze_pairs(p1: &Protocol, p2: &Protocol, ont: &Ontology) -> Result<Vec<Candidate>, DependencyError> {
    ensure_valid(p1)?;
    ensure_valid(p2)?;
    if p1.id == p2.id {
        return Err(DependencyError::SameProtocol(p1.id.clone()));
    }
    let mut out = Vec::new();
    for l1 in &p1.alphabet {
        let args1: Vec<&Argument> = data_arguments(l1.payload()).collect();
        if args1.is_empty() {
            continue;
        }
        for l2 in &p2.alphabet {
            let mut matches = Vec::new();
            for a1 in &args1 {
                for a2 in data_arguments(l2.payload()) {
                    if let Some(degree) = argument_match(a1, a2, ont) {
                        matches.push(ArgumentMatch {
                            left: a1.expr.to_string(),
                            right: a2.expr.to_string(),
                            degree,
                        });
                    }
                }
            }
            if !matches.is_empty() {
                out.push(Candidate {
                    pair: LabelPair {
                        left: QualifiedLabel::new(p1.id.clone(), l1.id.clone()),
                        right: QualifiedLabel::new(p2.id.clone(), l2.id.clone()),
                    },
                    matches,
                });
            }
        }
    }
    out.sort_by(|a, b| a.pair.cmp(&b.pair));
    Ok(out)
}

/// Every pair of labels `(l1, l2)` of `p1` × `p2` such that some data
/// argument of `l1` and some data argument of `l2` have equal types and a
/// degree of match other than fail.
pub fn pairs_label_dependencies(
    p1: &Protocol,
    p2: &Protocol,
    ont: &Ontology,
) -> Result<BTreeSet<LabelPair>, DependencyError> {
    Ok(analyze_pairs(p1, p2, ont)?.into_iter().map(|c| c.pair).collect())
}

/// Turns chosen candidates (indices into the canonical candidate order) into
/// oriented dependencies. Unchosen candidates are dropped.
pub fn apply_selection(
    candidates: &BTreeSet<LabelPair>,
    choices: &[Choice],
) -> Result<BTreeSet<LabelDependency>, DependencyError> {
    let list: Vec<&LabelPair> = candidates.iter().collect();
    let mut used = BTreeSet::new();
    let mut out = BTreeSet::new();
    for c in choices {
        let pair = list.get(c.index).ok_or(DependencyError::IndexOutOfRange {
            index: c.index,
            len: list.len(),
        })?;
        if !used.insert(c.index) {
            return Err(DependencyError::DuplicateChoice(c.index));
        }
        out.insert(match c.order {
            Order::LeftFirst => LabelDependency::new(pair.left.clone(), pair.right.clone()),
            Order::RightFirst => LabelDependency::new(pair.right.clone(), pair.left.clone()),
        });
    }
    Ok(out)
}

pub(crate) fn resolve<'a>(
    q: &QualifiedLabel,
    protocols: &[&'a Protocol],
) -> Result<&'a Protocol, DependencyError> {
    protocols
        .iter()
        .copied()
        .find(|p| p.id == q.protocol && p.label(&q.label).is_some())
        .ok_or_else(|| DependencyError::Unresolved(q.clone()))
}

/// Adds, for every `(f > s)`, a dependency `(pl > s)` for each label `pl`
/// that can precede `f` in its own protocol. Only the dominant side is
/// extended.
pub fn extended_label_dependencies(
    p1: &Protocol,
    p2: &Protocol,
    ld: &BTreeSet<LabelDependency>,
) -> Result<BTreeSet<LabelDependency>, DependencyError> {
    let protocols = [p1, p2];
    let mut extended = ld.clone();
    for d in ld {
        let pf = resolve(&d.dominant, &protocols)?;
        resolve(&d.dominated, &protocols)?;
        for pl in pf.previous_labels(&d.dominant.label)? {
            extended.insert(LabelDependency::new(
                QualifiedLabel::new(pf.id.clone(), pl),
                d.dominated.clone(),
            ));
        }
    }
    Ok(extended)
}

/// Dependency sets at each stage of the analysis. Stages only move forward:
/// candidates, selected, extended, then the deadlocked pairs found by
/// verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "stage", content = "items")]
pub enum DependencySet {
    Candidates(BTreeSet<LabelPair>),
    Selected(BTreeSet<LabelDependency>),
    Extended(BTreeSet<LabelDependency>),
    Deadlocked(Vec<crate::verification::Conflict>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Stage {
    Candidates,
    Selected,
    Extended,
    Deadlocked,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Candidates => "candidates",
            Stage::Selected => "selected",
            Stage::Extended => "extended",
            Stage::Deadlocked => "deadlocked",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Some(match s {
            "candidates" => Stage::Candidates,
            "selected" => Stage::Selected,
            "extended" => Stage::Extended,
            "deadlocked" => Stage::Deadlocked,
            _ => return None,
        })
    }
}

impl DependencySet {
    pub fn stage(&self) -> Stage {
        match self {
            DependencySet::Candidates(_) => Stage::Candidates,
            DependencySet::Selected(_) => Stage::Selected,
            DependencySet::Extended(_) => Stage::Extended,
            DependencySet::Deadlocked(_) => Stage::Deadlocked,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DependencySet::Candidates(s) => s.len(),
            DependencySet::Selected(s) | DependencySet::Extended(s) => s.len(),
            DependencySet::Deadlocked(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dependencies of a selected or extended set.
    pub fn dependencies(&self) -> Option<&BTreeSet<LabelDependency>> {
        match self {
            DependencySet::Selected(s) | DependencySet::Extended(s) => Some(s),
            _ => None,
        }
    }

    pub fn select(&self, choices: &[Choice]) -> Result<DependencySet, StageError> {
        match self {
            DependencySet::Candidates(c) => Ok(DependencySet::Selected(apply_selection(c, choices)?)),
            other => Err(StageError::Wrong {
                expected: Stage::Candidates,
                found: other.stage(),
            }),
        }
    }

    pub fn extend(&self, p1: &Protocol, p2: &Protocol) -> Result<DependencySet, StageError> {
        match self {
            DependencySet::Selected(ld) => Ok(DependencySet::Extended(extended_label_dependencies(p1, p2, ld)?)),
            other => Err(StageError::Wrong {
                expected: Stage::Selected,
                found: other.stage(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageError {
    #[error("expected a {} set, found {}", expected.as_str(), found.as_str())]
    Wrong { expected: Stage, found: Stage },
    #[error(transparent)]
    Dependency(#[from] DependencyError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Expression, Label, ProtocolBuilder, Variable};

    fn q(s: &str) -> QualifiedLabel {
        QualifiedLabel::parse(s).unwrap()
    }

    fn dep(s: &str) -> LabelDependency {
        LabelDependency::parse(s).unwrap()
    }

    fn var(n: &str, t: &str) -> Expression {
        Expression::var(Variable::regular(n, t))
    }

    fn ontology() -> Ontology {
        let edges = [("x", "top"), ("y", "top"), ("z", "x")];
        Ontology::new(
            "t",
            ["x", "y", "z", "top"].map(String::from),
            edges.map(|(a, b)| (a.to_owned(), b.to_owned())),
        )
        .unwrap()
    }

    fn one(id: &str, labels: Vec<Label>) -> Protocol {
        let mut b = ProtocolBuilder::new(id, "s0");
        for (i, l) in labels.iter().enumerate() {
            b = b.transition(format!("s{i}"), l.id.clone(), format!("s{}", i + 1));
        }
        let n = labels.len();
        labels.into_iter().fold(b, |b, l| b.label(l)).final_state(format!("s{n}")).build()
    }

    #[test]
    fn candidates_require_concept_and_type_match() {
        let p1 = one(
            "p",
            vec![
                Label::emission("a", "op1", vec![var("z", "int")]),
                Label::emission("b", "op2", vec![var("x", "string")]),
                Label::tau("t"),
            ],
        );
        let p2 = one(
            "q",
            vec![
                Label::reception("c", "op3", vec![var("x", "int")]),
                Label::reception("d", "op4", vec![var("y", "string")]),
                Label::reception("e", "op5", vec![var("x", "bool")]),
            ],
        );
        let cands = analyze_pairs(&p1, &p2, &ontology()).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].pair, LabelPair { left: q("p:a"), right: q("q:c") });
        assert_eq!(cands[0].matches[0].degree, MatchDegree::Exact);
        // mirrored
        let back = pairs_label_dependencies(&p2, &p1, &ontology()).unwrap();
        assert_eq!(back, BTreeSet::from([cands[0].pair.mirrored()]));
    }

    #[test]
    fn context_arguments_do_not_create_dependencies() {
        let ctx = Expression::var(Variable::context("priv", "string"));
        let mut p1 = one("p", vec![Label::emission("a", "op", vec![ctx.clone()])]);
        let mut p2 = one("q", vec![Label::emission("b", "op", vec![ctx])]);
        for p in [&mut p1, &mut p2] {
            p.context.attributes.push(crate::model::ContextAttribute {
                name: "priv".into(),
                value: crate::model::Value::Str("Guest".into()),
                kind: crate::model::AttributeKind::Dynamic,
                visibility: crate::model::Visibility::Public,
            });
        }
        let o = Ontology::new("t", ["priv".to_owned()], []).unwrap();
        assert!(pairs_label_dependencies(&p1, &p2, &o).unwrap().is_empty());
    }

    #[test]
    fn invalid_or_identical_protocols_rejected() {
        let p = one("p", vec![Label::tau("t")]);
        assert!(matches!(
            pairs_label_dependencies(&p, &p, &ontology()),
            Err(DependencyError::SameProtocol(_))
        ));
        let mut bad = one("q", vec![Label::tau("t")]);
        bad.initial = "zz".into();
        assert!(matches!(
            pairs_label_dependencies(&p, &bad, &ontology()),
            Err(DependencyError::Invalid { .. })
        ));
    }

    #[test]
    fn selection_orients_and_validates() {
        let cands = BTreeSet::from([
            LabelPair { left: q("p:a"), right: q("q:b") },
            LabelPair { left: q("p:c"), right: q("q:d") },
        ]);
        let ld = apply_selection(
            &cands,
            &[
                Choice { index: 1, order: Order::LeftFirst },
                Choice { index: 0, order: Order::RightFirst },
            ],
        )
        .unwrap();
        assert_eq!(ld, BTreeSet::from([dep("p:c > q:d"), dep("q:b > p:a")]));
        assert!(apply_selection(&cands, &[]).unwrap().is_empty());
        assert_eq!(
            apply_selection(&cands, &[Choice { index: 2, order: Order::LeftFirst }]),
            Err(DependencyError::IndexOutOfRange { index: 2, len: 2 })
        );
        assert_eq!(
            apply_selection(
                &cands,
                &[
                    Choice { index: 0, order: Order::LeftFirst },
                    Choice { index: 0, order: Order::RightFirst }
                ]
            ),
            Err(DependencyError::DuplicateChoice(0))
        );
    }

    #[test]
    fn extension_adds_predecessors_of_dominant_only() {
        // p: l then l' ; q: l''
        let p1 = one("p", vec![Label::tau("l"), Label::tau("l2")]);
        let p2 = one("q", vec![Label::tau("m0"), Label::tau("l3")]);
        let ld = BTreeSet::from([dep("p:l2 > q:l3")]);
        let e = extended_label_dependencies(&p1, &p2, &ld).unwrap();
        assert_eq!(e, BTreeSet::from([dep("p:l > q:l3"), dep("p:l2 > q:l3")]));
        assert!(extended_label_dependencies(&p1, &p2, &BTreeSet::new()).unwrap().is_empty());
        assert_eq!(
            extended_label_dependencies(&p1, &p2, &BTreeSet::from([dep("p:zz > q:l3")])),
            Err(DependencyError::Unresolved(q("p:zz")))
        );
    }

    #[test]
    fn stages_only_move_forward() {
        let cands = DependencySet::Candidates(BTreeSet::from([LabelPair {
            left: q("p:l"),
            right: q("q:l3"),
        }]));
        let sel = cands.select(&[Choice { index: 0, order: Order::LeftFirst }]).unwrap();
        assert_eq!(sel.stage(), Stage::Selected);
        assert!(matches!(sel.select(&[]), Err(StageError::Wrong { .. })));
        let p1 = one("p", vec![Label::tau("l")]);
        let p2 = one("q", vec![Label::tau("l3")]);
        let ext = sel.extend(&p1, &p2).unwrap();
        assert_eq!(ext.stage(), Stage::Extended);
        assert!(matches!(ext.extend(&p1, &p2), Err(StageError::Wrong { .. })));
    }
}
