//! The interactive analysis workflow: analyse a client pair, select and
//! order candidates, extend and verify, then step through executions.
//! Shared by the command line and the HTTP server; persisted as
//! `.session.xml`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composition::{
    explore, BlockedLabel, CompositionError, ConfigurationView, ExplorationSummary, System, TraceError, TraceEvent,
    TraceRunner,
};
use crate::dependency::{
    analyze_pairs, apply_selection, extended_label_dependencies, ArgumentMatch, Candidate, Choice, DependencyError,
    LabelDependency, LabelPair, Order,
};
use crate::model::{Label, Protocol, ProtocolId, QualifiedLabel, StateId, Value};
use crate::ontology::MatchDegree;
use crate::scenario::xml::{self, child, elements, flag, only, req, req_child, root, schema, version, Writer};
use crate::scenario::{self as sio, write_atomic, Scenario, ScenarioError, FORMAT_VERSION};
use crate::semantics::{ActionTag, StepError};
use crate::verification::{label_dependency_verification, ChainWarning, DeadlockReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SessionStage {
    Loaded,
    Analyzed,
    Selected,
    Extended,
    Verified,
    Exploring,
}

impl SessionStage {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStage::Loaded => "loaded",
            SessionStage::Analyzed => "analyzed",
            SessionStage::Selected => "selected",
            SessionStage::Extended => "extended",
            SessionStage::Verified => "verified",
            SessionStage::Exploring => "exploring",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SessionStage::Loaded,
            SessionStage::Analyzed,
            SessionStage::Selected,
            SessionStage::Extended,
            SessionStage::Verified,
            SessionStage::Exploring,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

impl fmt::Display for SessionStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("session is at stage `{found}`, this needs `{needed}` or later")]
    Stage { needed: SessionStage, found: SessionStage },
    #[error("verification reported {} deadlocked pair(s); execution refused without force", .0.conflicts.len())]
    Refused(DeadlockReport),
    #[error("{field}: {message}")]
    BadRequest { field: String, message: String },
    #[error(transparent)]
    Dependency(#[from] DependencyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// A client pair under analysis and everything derived from it so far.
#[derive(Debug, Clone)]
pub struct Session {
    pub scenario: Scenario,
    pub left: ProtocolId,
    pub right: ProtocolId,
    stage: SessionStage,
    candidates: Option<Vec<Candidate>>,
    selection: Option<Vec<Choice>>,
    selected: Option<BTreeSet<LabelDependency>>,
    extended: Option<BTreeSet<LabelDependency>>,
    report: Option<DeadlockReport>,
    forced: bool,
    runner: Option<TraceRunner>,
}

impl PartialEq for Session {
    fn eq(&self, o: &Self) -> bool {
        self.scenario == o.scenario
            && self.left == o.left
            && self.right == o.right
            && self.stage == o.stage
            && self.candidates == o.candidates
            && self.selection == o.selection
            && self.selected == o.selected
            && self.extended == o.extended
            && self.report == o.report
            && self.forced == o.forced
            && self.cursor() == o.cursor()
    }
}

/// The first parallel node's operands, when both are single clients.
fn default_pair(s: &Scenario) -> Option<(ProtocolId, ProtocolId)> {
    use crate::composition::CompositionExpr;
    fn find(e: &CompositionExpr) -> Option<(ProtocolId, ProtocolId)> {
        match e {
            CompositionExpr::Leaf { .. } => None,
            CompositionExpr::ParDep { left, right, .. } => match (&**left, &**right) {
                (CompositionExpr::Leaf { protocol: l }, CompositionExpr::Leaf { protocol: r }) => {
                    Some((l.clone(), r.clone()))
                }
                _ => find(left).or_else(|| find(right)),
            },
            CompositionExpr::Seq { left, right } | CompositionExpr::Choice { left, right } => {
                find(left).or_else(|| find(right))
            }
        }
    }
    find(&s.composition)
}

impl Session {
    /// Opens a session on two client protocols; without ids, the operands of
    /// the composition's first parallel node are used.
    pub fn new(scenario: Scenario, left: Option<ProtocolId>, right: Option<ProtocolId>) -> Result<Session, SessionError> {
        let (left, right) = match (left, right) {
            (Some(l), Some(r)) => (l, r),
            (None, None) => default_pair(&scenario).ok_or_else(|| SessionError::BadRequest {
                field: "left".into(),
                message: "the composition has no parallel pair of clients; name both protocols".into(),
            })?,
            _ => {
                return Err(SessionError::BadRequest {
                    field: "right".into(),
                    message: "name both protocols or neither".into(),
                })
            }
        };
        for (field, id) in [("left", &left), ("right", &right)] {
            if scenario.client(id).is_none() {
                return Err(SessionError::BadRequest {
                    field: field.into(),
                    message: format!("`{id}` is not a client protocol of the scenario"),
                });
            }
        }
        if left == right {
            return Err(SessionError::BadRequest {
                field: "right".into(),
                message: "the two protocols must differ".into(),
            });
        }
        Ok(Session {
            scenario,
            left,
            right,
            stage: SessionStage::Loaded,
            candidates: None,
            selection: None,
            selected: None,
            extended: None,
            report: None,
            forced: false,
            runner: None,
        })
    }

    fn protocols(&self) -> (&Protocol, &Protocol) {
        (
            self.scenario.client(&self.left).expect("checked at creation"),
            self.scenario.client(&self.right).expect("checked at creation"),
        )
    }

    fn need(&self, needed: SessionStage) -> Result<(), SessionError> {
        if self.stage < needed {
            Err(SessionError::Stage {
                needed,
                found: self.stage,
            })
        } else {
            Ok(())
        }
    }

    pub fn stage(&self) -> SessionStage {
        self.stage
    }

    pub fn forced(&self) -> bool {
        self.forced
    }

    /// Candidate pairs; computed on first use.
    pub fn analyze(&mut self) -> Result<&[Candidate], SessionError> {
        if self.candidates.is_none() {
            let (p1, p2) = self.protocols();
            let c = analyze_pairs(p1, p2, &self.scenario.ontology)?;
            self.candidates = Some(c);
            self.stage = SessionStage::Analyzed;
        }
        Ok(self.candidates.as_deref().unwrap_or_default())
    }

    pub fn candidates(&self) -> Result<&[Candidate], SessionError> {
        self.need(SessionStage::Analyzed)?;
        Ok(self.candidates.as_deref().unwrap_or_default())
    }

    pub fn candidate_pairs(&self) -> Result<BTreeSet<LabelPair>, SessionError> {
        Ok(self.candidates()?.iter().map(|c| c.pair.clone()).collect())
    }

    /// Records the user's choices, then extends and verifies at once. Any
    /// previous selection, report and execution are discarded.
    pub fn select(&mut self, choices: Vec<Choice>) -> Result<&DeadlockReport, SessionError> {
        self.need(SessionStage::Analyzed)?;
        let selected = apply_selection(&self.candidate_pairs()?, &choices)?;
        let (p1, p2) = self.protocols();
        let extended = extended_label_dependencies(p1, p2, &selected)?;
        let report = label_dependency_verification(p1, p2, &extended)?;
        self.selection = Some(choices);
        self.selected = Some(selected);
        self.extended = Some(extended);
        self.report = Some(report);
        self.runner = None;
        self.forced = false;
        self.stage = SessionStage::Verified;
        Ok(self.report.as_ref().expect("just set"))
    }

    pub fn selection(&self) -> Result<&[Choice], SessionError> {
        self.need(SessionStage::Selected)?;
        Ok(self.selection.as_deref().unwrap_or_default())
    }

    pub fn selected(&self) -> Result<&BTreeSet<LabelDependency>, SessionError> {
        self.need(SessionStage::Selected)?;
        Ok(self.selected.as_ref().expect("set with the stage"))
    }

    pub fn extended(&self) -> Result<&BTreeSet<LabelDependency>, SessionError> {
        self.need(SessionStage::Extended)?;
        Ok(self.extended.as_ref().expect("set with the stage"))
    }

    pub fn report(&self) -> Result<&DeadlockReport, SessionError> {
        self.need(SessionStage::Verified)?;
        Ok(self.report.as_ref().expect("set with the stage"))
    }

    pub fn system(&self) -> Result<System, SessionError> {
        Ok(self.scenario.system(self.extended()?)?)
    }

    fn gate(&self, force: bool) -> Result<(), SessionError> {
        let report = self.report()?;
        if !report.is_empty() && !force {
            return Err(SessionError::Refused(report.clone()));
        }
        Ok(())
    }

    pub fn explore(&self, bound: usize, force: bool) -> Result<ExplorationSummary, SessionError> {
        self.gate(force)?;
        Ok(explore(&self.system()?, bound)?.summary())
    }

    fn runner_mut(&mut self, force: bool) -> Result<&mut TraceRunner, SessionError> {
        if self.runner.is_none() {
            self.gate(force)?;
            self.runner = Some(TraceRunner::new(self.system()?));
            self.forced = force;
            self.stage = SessionStage::Exploring;
        }
        Ok(self.runner.as_mut().expect("just set"))
    }

    /// Takes the `index`-th enabled move, starting an execution if needed.
    pub fn step(&mut self, index: usize, force: bool) -> Result<ActionTag, SessionError> {
        Ok(self.runner_mut(force)?.step(index)?.clone())
    }

    pub fn update_context(&mut self, instance: &ProtocolId, name: &str, value: Value, force: bool) -> Result<(), SessionError> {
        Ok(self.runner_mut(force)?.update_context(instance, name, value)?)
    }

    /// Enabled moves and dependency-blocked labels of the current execution
    /// (of the initial configuration when none has started).
    pub fn moves(&self) -> Result<MovesView, SessionError> {
        let fresh;
        let runner = match &self.runner {
            Some(r) => r,
            None => {
                fresh = TraceRunner::new(self.system()?);
                &fresh
            }
        };
        Ok(MovesView {
            enabled: runner.moves()?.into_iter().map(|(t, _)| t).collect(),
            blocked: runner.blocked()?,
            complete: runner.is_complete(),
            deadlocked: runner.is_deadlocked()?,
            configuration: runner.current().view(),
        })
    }

    pub fn trace(&self) -> TraceView {
        match &self.runner {
            Some(r) => TraceView {
                events: r.events().to_vec(),
                configuration: Some(r.current().view()),
                complete: r.is_complete(),
                deadlocked: r.is_deadlocked().unwrap_or(false),
            },
            None => TraceView {
                events: Vec::new(),
                configuration: None,
                complete: false,
                deadlocked: false,
            },
        }
    }

    pub fn cursor(&self) -> &[TraceEvent] {
        self.runner.as_ref().map(TraceRunner::events).unwrap_or_default()
    }

    /// Drops the current execution, keeping the verified selection.
    pub fn reset_execution(&mut self) {
        if self.stage == SessionStage::Exploring {
            self.stage = SessionStage::Verified;
        }
        self.runner = None;
        self.forced = false;
    }

    pub fn graphs(&self) -> Vec<ProtocolGraph> {
        let mut out: Vec<ProtocolGraph> = self
            .scenario
            .clients
            .iter()
            .map(|c| ProtocolGraph::of(&c.protocol, Role::Client))
            .collect();
        out.extend(self.scenario.services.iter().map(|s| ProtocolGraph::of(&s.protocol, Role::Service)));
        out
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            stage: self.stage,
            scenario: self.scenario.name.clone(),
            left: self.left.clone(),
            right: self.right.clone(),
            composition: self.scenario.composition.to_string(),
        }
    }

    pub fn to_xml(&self) -> String {
        let mut w = Writer::new();
        let forced = if self.forced { "true" } else { "false" };
        w.open(
            "session",
            &[
                ("version", FORMAT_VERSION),
                ("stage", self.stage.as_str()),
                ("left", self.left.as_str()),
                ("right", self.right.as_str()),
                ("forced", forced),
            ],
        );
        self.scenario.write(&mut w);
        if let Some(cands) = &self.candidates {
            w.open("candidates", &[]);
            for c in cands {
                let (l, r) = (c.pair.left.to_string(), c.pair.right.to_string());
                w.open("candidate", &[("left", &l), ("right", &r)]);
                for m in &c.matches {
                    let d = m.degree.to_string();
                    w.empty("match", &[("left", &m.left), ("right", &m.right), ("degree", &d)]);
                }
                w.close("candidate");
            }
            w.close("candidates");
        }
        if let Some(sel) = &self.selection {
            w.open("selection", &[]);
            for c in sel {
                let i = c.index.to_string();
                let o = match c.order {
                    Order::LeftFirst => "leftFirst",
                    Order::RightFirst => "rightFirst",
                };
                w.empty("choice", &[("index", &i), ("order", o)]);
            }
            w.close("selection");
        }
        use crate::dependency::DependencySet;
        if let Some(s) = &self.selected {
            sio::write_items(&mut w, &DependencySet::Selected(s.clone()), &[]);
        }
        if let Some(s) = &self.extended {
            sio::write_items(&mut w, &DependencySet::Extended(s.clone()), &[]);
        }
        if let Some(r) = &self.report {
            w.open("report", &[]);
            for c in &r.conflicts {
                sio::write_conflict(&mut w, c);
            }
            for ch in &r.chain_warnings {
                w.open("chain", &[]);
                for l in &ch.labels {
                    w.empty("label", &[("ref", &l.to_string())]);
                }
                w.close("chain");
            }
            w.close("report");
        }
        if let Some(r) = &self.runner {
            w.open("cursor", &[]);
            for e in r.events() {
                match e {
                    TraceEvent::Step { index, .. } => w.empty("step", &[("index", &index.to_string())]),
                    TraceEvent::ContextUpdate { instance, name, value } => w.empty(
                        "update",
                        &[
                            ("instance", instance.as_str()),
                            ("name", name),
                            ("type", value.type_name().as_str()),
                            ("value", &value.to_text()),
                        ],
                    ),
                }
            }
            w.close("cursor");
        }
        w.close("session");
        w.finish()
    }

    pub fn from_xml(text: &str) -> Result<Session, SessionError> {
        let doc = xml::parse(text)?;
        let r = root(&doc, "session")?;
        version(r, FORMAT_VERSION)?;
        only(r, &["scenario", "candidates", "selection", "dependencies", "report", "cursor"])?;
        let st = req(r, "stage")?;
        let stage = SessionStage::parse(st).ok_or_else(|| schema(r, format!("unknown stage `{st}`")))?;
        let scenario = sio::scenario_from(req_child(r, "scenario")?, &sio::no_files)?;
        let mut s = Session::new(
            scenario,
            Some(req(r, "left")?.into()),
            Some(req(r, "right")?.into()),
        )?;
        if let Some(c) = child(r, "candidates") {
            only(c, &["candidate"])?;
            let mut cands = Vec::new();
            for cn in elements(c) {
                only(cn, &["match"])?;
                let q = |attr: &str| {
                    let v = req(cn, attr)?;
                    QualifiedLabel::parse(v).ok_or_else(|| schema(cn, format!("bad label reference `{v}`")))
                };
                let pair = LabelPair {
                    left: q("left")?,
                    right: q("right")?,
                };
                let matches = elements(cn)
                    .map(|m| {
                        let d = req(m, "degree")?;
                        Ok(ArgumentMatch {
                            left: req(m, "left")?.to_owned(),
                            right: req(m, "right")?.to_owned(),
                            degree: parse_degree(d).ok_or_else(|| schema(m, format!("unknown degree `{d}`")))?,
                        })
                    })
                    .collect::<Result<_, ScenarioError>>()?;
                cands.push(Candidate { pair, matches });
            }
            s.candidates = Some(cands);
        }
        if let Some(sel) = child(r, "selection") {
            only(sel, &["choice"])?;
            let choices = elements(sel)
                .map(|c| {
                    let i = req(c, "index")?;
                    Ok(Choice {
                        index: i.parse().map_err(|_| schema(c, format!("bad index `{i}`")))?,
                        order: match req(c, "order")? {
                            "leftFirst" => Order::LeftFirst,
                            "rightFirst" => Order::RightFirst,
                            o => return Err(schema(c, format!("unknown order `{o}`"))),
                        },
                    })
                })
                .collect::<Result<_, ScenarioError>>()?;
            s.selection = Some(choices);
        }
        use crate::dependency::{DependencySet, Stage};
        for d in elements(r).filter(|n| n.has_tag_name("dependencies")) {
            match (sio::stage_of(d)?, sio::parse_items(d, sio::stage_of(d)?)?) {
                (Stage::Selected, DependencySet::Selected(x)) => s.selected = Some(x),
                (Stage::Extended, DependencySet::Extended(x)) => s.extended = Some(x),
                _ => return Err(schema(d, "a session stores selected and extended sets only").into()),
            }
        }
        if let Some(rep) = child(r, "report") {
            only(rep, &["conflict", "chain"])?;
            let mut report = DeadlockReport::default();
            for n in elements(rep) {
                if n.has_tag_name("conflict") {
                    report.conflicts.push(sio::conflict(n)?);
                } else {
                    only(n, &["label"])?;
                    let labels = elements(n)
                        .map(|l| {
                            let v = req(l, "ref")?;
                            QualifiedLabel::parse(v).ok_or_else(|| schema(l, format!("bad label reference `{v}`")))
                        })
                        .collect::<Result<_, ScenarioError>>()?;
                    report.chain_warnings.push(ChainWarning { labels });
                }
            }
            s.report = Some(report);
        }
        s.stage = stage;
        s.forced = flag(r, "forced")?;
        let consistent = match stage {
            SessionStage::Loaded => s.candidates.is_none() && s.selection.is_none(),
            SessionStage::Analyzed => s.candidates.is_some() && s.selection.is_none(),
            _ => {
                s.candidates.is_some()
                    && s.selection.is_some()
                    && s.selected.is_some()
                    && s.extended.is_some()
                    && s.report.is_some()
            }
        };
        if !consistent {
            return Err(schema(r, format!("contents do not match stage `{stage}`")).into());
        }
        if let Some(c) = child(r, "cursor") {
            if stage != SessionStage::Exploring {
                return Err(schema(c, "a cursor needs stage `exploring`").into());
            }
            only(c, &["step", "update"])?;
            let mut events = Vec::new();
            for e in elements(c) {
                if e.has_tag_name("step") {
                    let i = req(e, "index")?;
                    events.push(TraceEvent::Step {
                        index: i.parse().map_err(|_| schema(e, format!("bad index `{i}`")))?,
                        action: ActionTag::Internal {
                            by: QualifiedLabel::new("", ""),
                        },
                    });
                } else {
                    events.push(TraceEvent::ContextUpdate {
                        instance: req(e, "instance")?.into(),
                        name: req(e, "name")?.to_owned(),
                        value: sio::typed_value(e, "type", "value")?,
                    });
                }
            }
            s.runner = Some(TraceRunner::replay(s.system()?, &events)?);
        } else if stage == SessionStage::Exploring {
            s.runner = Some(TraceRunner::new(s.system()?));
        }
        Ok(s)
    }

    /// Atomic write.
    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        Ok(write_atomic(path, self.to_xml().as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Session, SessionError> {
        Session::from_xml(&sio::read(path)?)
    }
}

fn parse_degree(s: &str) -> Option<MatchDegree> {
    [MatchDegree::Exact, MatchDegree::PlugIn, MatchDegree::Subsume, MatchDegree::Fail]
        .into_iter()
        .find(|d| d.to_string() == s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionSummary {
    pub stage: SessionStage,
    pub scenario: String,
    pub left: ProtocolId,
    pub right: ProtocolId,
    pub composition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MovesView {
    pub enabled: Vec<ActionTag>,
    pub blocked: Vec<BlockedLabel>,
    pub complete: bool,
    pub deadlocked: bool,
    pub configuration: ConfigurationView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceView {
    pub events: Vec<TraceEvent>,
    pub configuration: Option<ConfigurationView>,
    pub complete: bool,
    pub deadlocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    Client,
    Service,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphState {
    pub id: StateId,
    pub initial: bool,
    #[serde(rename = "final")]
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphEdge {
    pub source: StateId,
    pub target: StateId,
    pub label: QualifiedLabel,
    pub text: String,
}

/// A protocol as nodes and labelled edges, for drawing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtocolGraph {
    pub id: ProtocolId,
    pub role: Role,
    pub states: Vec<GraphState>,
    pub transitions: Vec<GraphEdge>,
}

impl ProtocolGraph {
    pub fn of(p: &Protocol, role: Role) -> ProtocolGraph {
        ProtocolGraph {
            id: p.id.clone(),
            role,
            states: p
                .states
                .iter()
                .map(|s| GraphState {
                    id: s.clone(),
                    initial: *s == p.initial,
                    is_final: p.is_final(s),
                })
                .collect(),
            transitions: p
                .transitions
                .iter()
                .map(|t| GraphEdge {
                    source: t.source.clone(),
                    target: t.target.clone(),
                    label: QualifiedLabel::new(p.id.clone(), t.label.clone()),
                    text: p.label(&t.label).map(Label::to_string).unwrap_or_default(),
                })
                .collect(),
        }
    }
}
