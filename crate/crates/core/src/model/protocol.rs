use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Direction, Expression, Label, LabelAction, LabelId, ProtocolId, StateId, TypeName, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AttributeKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextAttribute {
    pub name: String,
    pub value: Value,
    pub kind: AttributeKind,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextProfile {
    pub attributes: Vec<ContextAttribute>,
}

impl ContextProfile {
    pub fn get(&self, name: &str) -> Option<&ContextAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationProfile {
    pub name: String,
    pub inputs: Vec<Parameter>,
    pub outputs: Vec<Parameter>,
    pub return_type: Option<TypeName>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub provided: Vec<OperationProfile>,
    pub required: Vec<OperationProfile>,
}

impl Signature {
    pub fn contains(&self, operation: &str) -> bool {
        self.provided
            .iter()
            .chain(&self.required)
            .any(|o| o.name == operation)
    }

    /// Derives a signature from the typed payloads of an alphabet: receptions
    /// are provided operations, emissions required ones.
    pub fn infer(alphabet: &[Label]) -> Signature {
        let mut provided: BTreeMap<String, OperationProfile> = BTreeMap::new();
        let mut required: BTreeMap<String, OperationProfile> = BTreeMap::new();
        for label in alphabet {
            let LabelAction::Event {
                operation,
                direction,
                payload,
            } = &label.action
            else {
                continue;
            };
            let target = match direction {
                Direction::Reception => &mut provided,
                Direction::Emission => &mut required,
            };
            target.entry(operation.clone()).or_insert_with(|| OperationProfile {
                name: operation.clone(),
                inputs: payload
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Parameter {
                        name: a.concept().map(str::to_owned).unwrap_or_else(|| format!("arg{i}")),
                        ty: a.ty().unwrap_or_else(|| TypeName::new("unknown")),
                    })
                    .collect(),
                outputs: Vec::new(),
                return_type: None,
            });
        }
        Signature {
            provided: provided.into_values().collect(),
            required: required.into_values().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub source: StateId,
    pub label: LabelId,
    pub target: StateId,
}

impl Transition {
    pub fn new(source: impl Into<StateId>, label: impl Into<LabelId>, target: impl Into<StateId>) -> Self {
        Self {
            source: source.into(),
            label: label.into(),
            target: target.into(),
        }
    }
}

/// A context-aware symbolic transition system together with the context
/// profile and signature of its interface.
///
/// Fields are public so that ill-formed protocols can be built and reported
/// on by [`validate_protocol`]; the engine entry points validate first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Protocol {
    pub id: ProtocolId,
    pub alphabet: Vec<Label>,
    pub states: BTreeSet<StateId>,
    pub initial: StateId,
    pub finals: BTreeSet<StateId>,
    pub transitions: Vec<Transition>,
    pub context: ContextProfile,
    pub signature: Signature,
}

/// One well-formedness violation, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub element: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown label `{label}` in protocol `{protocol}`")]
    UnknownLabel { protocol: ProtocolId, label: LabelId },
    #[error("no arguments on internal action `{0}`")]
    NoArguments(LabelId),
}

impl Protocol {
    pub fn label(&self, id: &LabelId) -> Option<&Label> {
        self.alphabet.iter().find(|l| &l.id == id)
    }

    fn require_label(&self, id: &LabelId) -> Result<&Label, ModelError> {
        self.label(id).ok_or_else(|| ModelError::UnknownLabel {
            protocol: self.id.clone(),
            label: id.clone(),
        })
    }

    pub fn is_final(&self, s: &StateId) -> bool {
        self.finals.contains(s)
    }

    pub fn outgoing<'a>(&'a self, s: &'a StateId) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| &t.source == s)
    }

    /// Ids of the labels that occur on at least one cycle.
    pub fn loop_labels(&self) -> BTreeSet<LabelId> {
        self.alphabet
            .iter()
            .filter(|l| self.label_in_loop(&l.id).unwrap_or(false))
            .map(|l| l.id.clone())
            .collect()
    }

    /// States reachable from `from` (inclusive) along transitions, or against
    /// them when `backward` is set.
    fn reach(&self, from: impl IntoIterator<Item = StateId>, backward: bool) -> BTreeSet<StateId> {
        let mut seen: BTreeSet<StateId> = BTreeSet::new();
        let mut queue: VecDeque<StateId> = VecDeque::new();
        for s in from {
            if seen.insert(s.clone()) {
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for t in &self.transitions {
                let (a, b) = if backward {
                    (&t.target, &t.source)
                } else {
                    (&t.source, &t.target)
                };
                if a == &s && seen.insert(b.clone()) {
                    queue.push_back(b.clone());
                }
            }
        }
        seen
    }

    /// Labels that can precede an occurrence of `label` on some run from the
    /// initial state: every label on a transition `u -l'-> v` with `u`
    /// reachable from the initial state and some `label`-transition source
    /// reachable from `v`.
    pub fn previous_labels(&self, label: &LabelId) -> Result<BTreeSet<LabelId>, ModelError> {
        self.require_label(label)?;
        let forward = self.reach([self.initial.clone()], false);
        let sources = self
            .transitions
            .iter()
            .filter(|t| &t.label == label && forward.contains(&t.source))
            .map(|t| t.source.clone());
        let backward = self.reach(sources, true);
        Ok(self
            .transitions
            .iter()
            .filter(|t| forward.contains(&t.source) && backward.contains(&t.target))
            .map(|t| t.label.clone())
            .collect())
    }

    /// True iff some cycle of the transition graph goes through a transition
    /// labelled `label`.
    pub fn label_in_loop(&self, label: &LabelId) -> Result<bool, ModelError> {
        self.require_label(label)?;
        Ok(self
            .transitions
            .iter()
            .filter(|t| &t.label == label)
            .any(|t| self.reach([t.target.clone()], false).contains(&t.source)))
    }
}

/// The payload of an event label, in order.
pub fn arguments(label: &Label) -> Result<&[super::Argument], ModelError> {
    match &label.action {
        LabelAction::Tau => Err(ModelError::NoArguments(label.id.clone())),
        LabelAction::Event { payload, .. } => Ok(payload),
    }
}

/// Checks every structural invariant of a protocol and its interface.
/// Returns one diagnostic per violation; empty means well formed.
pub fn validate_protocol(p: &Protocol) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |element: String, message: &str| {
        out.push(Diagnostic {
            element,
            message: message.to_owned(),
        })
    };
    let pid = &p.id;

    if p.id.as_str().is_empty() {
        diag("protocol".into(), "empty protocol id");
    }
    if !p.states.contains(&p.initial) {
        diag(format!("{pid}/initial {}", p.initial), "initial state not in states");
    }
    for f in &p.finals {
        if !p.states.contains(f) {
            diag(format!("{pid}/final {f}"), "final state not in states");
        }
    }

    let mut ids = BTreeSet::new();
    for l in &p.alphabet {
        if !ids.insert(&l.id) {
            diag(format!("{pid}/label {}", l.id), "duplicate label id");
        }
    }
    for (i, t) in p.transitions.iter().enumerate() {
        let el = format!("{pid}/transition #{i} ({} -{}-> {})", t.source, t.label, t.target);
        if !p.states.contains(&t.source) {
            diag(el.clone(), "source state not in states");
        }
        if !p.states.contains(&t.target) {
            diag(el.clone(), "target state not in states");
        }
        if p.label(&t.label).is_none() {
            diag(el, "label not in alphabet");
        }
    }

    let mut names = BTreeSet::new();
    for a in &p.context.attributes {
        if a.name.is_empty() {
            diag(format!("{pid}/context"), "empty context attribute name");
        } else if !names.insert(a.name.as_str()) {
            diag(format!("{pid}/context {}", a.name), "duplicate context attribute");
        }
    }

    let provided: BTreeSet<&str> = p.signature.provided.iter().map(|o| o.name.as_str()).collect();
    for o in &p.signature.required {
        if provided.contains(o.name.as_str()) {
            diag(
                format!("{pid}/signature {}", o.name),
                "operation both provided and required",
            );
        }
    }
    for o in p.signature.provided.iter().chain(&p.signature.required) {
        let mut params = BTreeSet::new();
        for prm in o.inputs.iter().chain(&o.outputs) {
            if !params.insert(prm.name.as_str()) {
                diag(
                    format!("{pid}/signature {} param {}", o.name, prm.name),
                    "duplicate parameter name",
                );
            }
        }
    }

    for l in &p.alphabet {
        let el = format!("{pid}/label {}", l.id);
        check_context_vars(p, &l.guard, &el, false, &mut diag);
        if let LabelAction::Event {
            operation,
            direction,
            payload,
        } = &l.action
        {
            if !p.signature.contains(operation) {
                diag(el.clone(), "operation not in signature");
            }
            for a in payload {
                match direction {
                    Direction::Reception => match a.expr.as_var() {
                        Some(v) if !v.is_context => {}
                        Some(_) => diag(el.clone(), "reception into a context variable"),
                        None => diag(el.clone(), "reception payload must be variables"),
                    },
                    Direction::Emission => {
                        check_context_vars(p, &a.expr, &el, true, &mut diag);
                        if a.ty().is_none() {
                            diag(el.clone(), "payload expression has no static type");
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_context_vars(
    p: &Protocol,
    e: &Expression,
    element: &str,
    in_payload: bool,
    diag: &mut impl FnMut(String, &str),
) {
    for v in e.variables() {
        if !v.is_context {
            continue;
        }
        match p.context.get(&v.name) {
            Some(a) if a.kind == AttributeKind::Dynamic => {
                if in_payload && a.visibility == Visibility::Private {
                    diag(
                        element.to_owned(),
                        &format!("private context attribute `~{}` emitted", v.name),
                    );
                }
            }
            Some(_) => diag(
                element.to_owned(),
                &format!("context variable `~{}` names a static attribute", v.name),
            ),
            None => diag(
                element.to_owned(),
                &format!("context variable `~{}` has no dynamic context attribute", v.name),
            ),
        }
    }
}

/// Convenience constructor used by tests and fixtures built in code.
#[derive(Debug, Clone)]
pub struct ProtocolBuilder {
    p: Protocol,
    explicit_signature: bool,
}

impl ProtocolBuilder {
    pub fn new(id: impl Into<ProtocolId>, initial: impl Into<StateId>) -> Self {
        let initial = initial.into();
        Self {
            p: Protocol {
                id: id.into(),
                alphabet: Vec::new(),
                states: BTreeSet::from([initial.clone()]),
                initial,
                finals: BTreeSet::new(),
                transitions: Vec::new(),
                context: ContextProfile::default(),
                signature: Signature::default(),
            },
            explicit_signature: false,
        }
    }

    pub fn state(mut self, s: impl Into<StateId>) -> Self {
        self.p.states.insert(s.into());
        self
    }

    pub fn final_state(mut self, s: impl Into<StateId>) -> Self {
        let s = s.into();
        self.p.states.insert(s.clone());
        self.p.finals.insert(s);
        self
    }

    pub fn label(mut self, l: Label) -> Self {
        self.p.alphabet.push(l);
        self
    }

    /// Adds a transition, declaring both endpoint states.
    pub fn transition(mut self, from: impl Into<StateId>, label: impl Into<LabelId>, to: impl Into<StateId>) -> Self {
        let t = Transition::new(from, label, to);
        self.p.states.insert(t.source.clone());
        self.p.states.insert(t.target.clone());
        self.p.transitions.push(t);
        self
    }

    pub fn context(mut self, name: impl Into<String>, value: Value, kind: AttributeKind, visibility: Visibility) -> Self {
        self.p.context.attributes.push(ContextAttribute {
            name: name.into(),
            value,
            kind,
            visibility,
        });
        self
    }

    pub fn signature(mut self, s: Signature) -> Self {
        self.p.signature = s;
        self.explicit_signature = true;
        self
    }

    pub fn build(mut self) -> Protocol {
        if !self.explicit_signature {
            self.p.signature = Signature::infer(&self.p.alphabet);
        }
        self.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Argument, Variable};

    fn linear() -> Protocol {
        ProtocolBuilder::new("p", "s0")
            .final_state("s3")
            .label(Label::tau("a"))
            .label(Label::tau("b"))
            .label(Label::tau("c"))
            .transition("s0", "a", "s1")
            .transition("s1", "b", "s2")
            .transition("s2", "c", "s3")
            .build()
    }

    fn ids(xs: &[&str]) -> BTreeSet<LabelId> {
        xs.iter().map(|s| LabelId::new(*s)).collect()
    }

    #[test]
    fn well_formed_protocol_has_no_diagnostics() {
        assert!(validate_protocol(&linear()).is_empty());
    }

    #[test]
    fn missing_final_state_reported() {
        let mut p = linear();
        p.finals = BTreeSet::from([StateId::new("s_missing")]);
        let d = validate_protocol(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "final state not in states");
        assert!(d[0].element.contains("s_missing"));
    }

    #[test]
    fn structural_violations_each_reported() {
        let mut p = linear();
        p.initial = "nowhere".into();
        p.transitions.push(Transition::new("s3", "zzz", "s9"));
        p.alphabet.push(Label::tau("a"));
        let msgs: Vec<_> = validate_protocol(&p).into_iter().map(|d| d.message).collect();
        assert!(msgs.contains(&"initial state not in states".to_owned()));
        assert!(msgs.contains(&"target state not in states".to_owned()));
        assert!(msgs.contains(&"label not in alphabet".to_owned()));
        assert!(msgs.contains(&"duplicate label id".to_owned()));
    }

    #[test]
    fn signature_and_context_checks() {
        let loc = Expression::var(Variable::context("loc", "location"));
        let mut p = ProtocolBuilder::new("rc", "r0")
            .final_state("r1")
            .label(Label::emission("l1", "reqRoute", vec![loc.clone()]))
            .transition("r0", "l1", "r1")
            .build();
        // ~loc has no attribute yet
        assert_eq!(validate_protocol(&p).len(), 1);
        p.context.attributes.push(ContextAttribute {
            name: "loc".into(),
            value: Value::Str("x".into()),
            kind: AttributeKind::Dynamic,
            visibility: Visibility::Private,
        });
        let d = validate_protocol(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("private"));
        p.context.attributes[0].visibility = Visibility::Public;
        assert!(validate_protocol(&p).is_empty());
        p.signature = Signature::default();
        assert_eq!(validate_protocol(&p)[0].message, "operation not in signature");
    }

    #[test]
    fn reception_payload_must_be_regular_variables() {
        let p = ProtocolBuilder::new("p", "s0")
            .final_state("s1")
            .label(Label::event(
                "l",
                "op",
                Direction::Reception,
                vec![Argument::new(Expression::lit(Value::Int(1)))],
            ))
            .transition("s0", "l", "s1")
            .build();
        assert_eq!(validate_protocol(&p)[0].message, "reception payload must be variables");
    }

    #[test]
    fn previous_labels_linear_and_first() {
        let p = linear();
        assert_eq!(p.previous_labels(&"c".into()).unwrap(), ids(&["a", "b"]));
        assert!(p.previous_labels(&"a".into()).unwrap().is_empty());
        assert!(matches!(
            p.previous_labels(&"zz".into()),
            Err(ModelError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn previous_labels_branching() {
        // s0-a->s1, s0-b->s2, s1-c->s3
        let p = ProtocolBuilder::new("p", "s0")
            .final_state("s3")
            .label(Label::tau("a"))
            .label(Label::tau("b"))
            .label(Label::tau("c"))
            .transition("s0", "a", "s1")
            .transition("s0", "b", "s2")
            .transition("s1", "c", "s3")
            .build();
        assert_eq!(p.previous_labels(&"c".into()).unwrap(), ids(&["a"]));
    }

    #[test]
    fn loops() {
        let p = ProtocolBuilder::new("p", "s0")
            .final_state("s2")
            .label(Label::tau("l"))
            .label(Label::tau("m"))
            .label(Label::tau("n"))
            .transition("s0", "l", "s1")
            .transition("s1", "m", "s0")
            .transition("s1", "n", "s2")
            .build();
        assert!(p.label_in_loop(&"l".into()).unwrap());
        assert!(p.label_in_loop(&"m".into()).unwrap());
        assert!(!p.label_in_loop(&"n".into()).unwrap());
        assert!(!linear().label_in_loop(&"b".into()).unwrap());
        // a label on a loop precedes itself
        assert_eq!(p.previous_labels(&"l".into()).unwrap(), ids(&["l", "m"]));
        assert_eq!(p.loop_labels(), ids(&["l", "m"]));
    }

    #[test]
    fn arguments_of_tau_is_an_error() {
        assert_eq!(
            arguments(&Label::tau("t")),
            Err(ModelError::NoArguments("t".into()))
        );
        assert!(arguments(&Label::emission("e", "op", vec![])).unwrap().is_empty());
    }
}
