use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::CompositionExpr;
use crate::dependency::LabelDependency;
use crate::model::{AttributeKind, ProtocolId, QualifiedLabel, StateId, Value, Variable};
use crate::semantics::{communicate, fire, matches, Action, ActionTag, ActiveState, Environment, EvalError, StepError, Successor};

/// `{d ∈ ld | dominant(d) ≠ l}`
pub fn remove(l: &QualifiedLabel, ld: &BTreeSet<LabelDependency>) -> BTreeSet<LabelDependency> {
    ld.iter().filter(|d| &d.dominant != l).cloned().collect()
}

/// Running client composition. Parallel nodes carry their current
/// dependency set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompositionState {
    Leaf(ActiveState),
    Seq(Box<CompositionState>, Box<CompositionState>),
    Choice(Box<CompositionState>, Box<CompositionState>),
    ParDep {
        left: Box<CompositionState>,
        right: Box<CompositionState>,
        ld: BTreeSet<LabelDependency>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Side {
    Left,
    Right,
}

impl CompositionState {
    pub fn initial(
        expr: &CompositionExpr,
        leaf: &mut impl FnMut(&ProtocolId) -> Option<ActiveState>,
    ) -> Result<CompositionState, CompositionError> {
        let two = |l: &CompositionExpr, r: &CompositionExpr, leaf: &mut _| {
            Ok::<_, CompositionError>((
                Box::new(CompositionState::initial(l, leaf)?),
                Box::new(CompositionState::initial(r, leaf)?),
            ))
        };
        Ok(match expr {
            CompositionExpr::Leaf { protocol } => CompositionState::Leaf(
                leaf(protocol).ok_or_else(|| CompositionError::UnknownProtocol(protocol.clone()))?,
            ),
            CompositionExpr::Seq { left, right } => {
                let (l, r) = two(left, right, leaf)?;
                CompositionState::Seq(l, r)
            }
            CompositionExpr::Choice { left, right } => {
                let (l, r) = two(left, right, leaf)?;
                CompositionState::Choice(l, r)
            }
            CompositionExpr::ParDep { left, right, deps, .. } => {
                let (l, r) = two(left, right, leaf)?;
                CompositionState::ParDep {
                    left: l,
                    right: r,
                    ld: deps.clone(),
                }
            }
        })
    }

    /// Correct termination: a sequence needs both operands final (the right
    /// one still in its initial state), a choice either, a parallel node both.
    pub fn is_final(&self) -> bool {
        match self {
            CompositionState::Leaf(a) => a.is_final(),
            CompositionState::Seq(l, r) => l.is_final() && r.is_final(),
            CompositionState::Choice(l, r) => l.is_final() || r.is_final(),
            CompositionState::ParDep { left, right, .. } => left.is_final() && right.is_final(),
        }
    }

    /// Leaves that may move now, with their paths.
    pub fn active_leaves(&self) -> Vec<(Vec<Side>, &ActiveState)> {
        let mut out = Vec::new();
        self.collect_active(&mut Vec::new(), &mut out);
        out
    }

    fn collect_active<'a>(&'a self, path: &mut Vec<Side>, out: &mut Vec<(Vec<Side>, &'a ActiveState)>) {
        match self {
            CompositionState::Leaf(a) => out.push((path.clone(), a)),
            CompositionState::Seq(l, r) => {
                path.push(Side::Left);
                l.collect_active(path, out);
                path.pop();
                if l.is_final() {
                    path.push(Side::Right);
                    r.collect_active(path, out);
                    path.pop();
                }
            }
            CompositionState::Choice(l, r) | CompositionState::ParDep { left: l, right: r, .. } => {
                for (side, c) in [(Side::Left, l), (Side::Right, r)] {
                    path.push(side);
                    c.collect_active(path, out);
                    path.pop();
                }
            }
        }
    }

    /// Every leaf, started or not.
    pub fn all_leaves(&self) -> Vec<&ActiveState> {
        match self {
            CompositionState::Leaf(a) => vec![a],
            CompositionState::Seq(l, r)
            | CompositionState::Choice(l, r)
            | CompositionState::ParDep { left: l, right: r, .. } => {
                let mut v = l.all_leaves();
                v.extend(r.all_leaves());
                v
            }
        }
    }

    fn all_leaves_mut(&mut self) -> Vec<&mut ActiveState> {
        match self {
            CompositionState::Leaf(a) => vec![a],
            CompositionState::Seq(l, r)
            | CompositionState::Choice(l, r)
            | CompositionState::ParDep { left: l, right: r, .. } => {
                let mut v = l.all_leaves_mut();
                v.extend(r.all_leaves_mut());
                v
            }
        }
    }

    pub fn leaf_at(&self, path: &[Side]) -> Option<&ActiveState> {
        match (self, path.split_first()) {
            (CompositionState::Leaf(a), None) => Some(a),
            (
                CompositionState::Seq(l, r)
                | CompositionState::Choice(l, r)
                | CompositionState::ParDep { left: l, right: r, .. },
                Some((side, rest)),
            ) => match side {
                Side::Left => l.leaf_at(rest),
                Side::Right => r.leaf_at(rest),
            },
            _ => None,
        }
    }

    /// Dependencies of the parallel nodes above `path` that forbid `l` now:
    /// those in which it is dominated.
    pub fn blocking(&self, path: &[Side], l: &QualifiedLabel) -> Vec<LabelDependency> {
        let mut out = Vec::new();
        let mut node = self;
        let mut rest = path;
        loop {
            let (lc, rc) = match node {
                CompositionState::Leaf(_) => return out,
                CompositionState::ParDep { left, right, ld } => {
                    out.extend(ld.iter().filter(|d| &d.dominated == l).cloned());
                    (left, right)
                }
                CompositionState::Seq(l, r) | CompositionState::Choice(l, r) => (l, r),
            };
            let Some((side, tail)) = rest.split_first() else {
                return out;
            };
            node = if *side == Side::Left { lc } else { rc };
            rest = tail;
        }
    }

    /// Replaces the leaf at `path` after it fired `l`, applying the
    /// structural rules on the way: a sequence whose right operand moves
    /// collapses to it, a choice commits to the moving side, and a parallel
    /// node drops the dependencies in which `l` is dominant unless `l` is on a
    /// loop.
    pub fn advance(&self, path: &[Side], l: &QualifiedLabel, in_loop: bool, next: ActiveState) -> CompositionState {
        let Some((side, rest)) = path.split_first() else {
            return CompositionState::Leaf(next);
        };
        match self {
            CompositionState::Leaf(_) => CompositionState::Leaf(next),
            CompositionState::Seq(lc, rc) => match side {
                Side::Left => CompositionState::Seq(Box::new(lc.advance(rest, l, in_loop, next)), rc.clone()),
                Side::Right => rc.advance(rest, l, in_loop, next),
            },
            CompositionState::Choice(lc, rc) => match side {
                Side::Left => lc.advance(rest, l, in_loop, next),
                Side::Right => rc.advance(rest, l, in_loop, next),
            },
            CompositionState::ParDep { left, right, ld } => {
                let ld = if in_loop { ld.clone() } else { remove(l, ld) };
                let (left, right) = match side {
                    Side::Left => (Box::new(left.advance(rest, l, in_loop, next)), right.clone()),
                    Side::Right => (left.clone(), Box::new(right.advance(rest, l, in_loop, next))),
                };
                CompositionState::ParDep { left, right, ld }
            }
        }
    }

    /// Current dependency sets of the parallel nodes, outermost first.
    pub fn dependency_sets(&self) -> Vec<&BTreeSet<LabelDependency>> {
        match self {
            CompositionState::Leaf(_) => vec![],
            CompositionState::Seq(l, r) | CompositionState::Choice(l, r) => {
                let mut v = l.dependency_sets();
                v.extend(r.dependency_sets());
                v
            }
            CompositionState::ParDep { left, right, ld } => {
                let mut v = vec![ld];
                v.extend(left.dependency_sets());
                v.extend(right.dependency_sets());
                v
            }
        }
    }
}

/// Client composition plus the running service instances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub client: CompositionState,
    pub services: Vec<ActiveState>,
}

impl Configuration {
    pub fn is_complete(&self) -> bool {
        self.client.is_final() && self.services.iter().all(ActiveState::is_final)
    }

    pub fn view(&self) -> ConfigurationView {
        let v = |a: &ActiveState| InstanceView {
            instance: a.instance.clone(),
            protocol: a.protocol.id.clone(),
            state: a.state.clone(),
            is_final: a.is_final(),
            env: a.env.clone(),
        };
        ConfigurationView {
            clients: self.client.all_leaves().into_iter().map(v).collect(),
            services: self.services.iter().map(v).collect(),
            dependencies: self.client.dependency_sets().into_iter().cloned().collect(),
            complete: self.is_complete(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceView {
    pub instance: ProtocolId,
    pub protocol: ProtocolId,
    pub state: StateId,
    pub is_final: bool,
    pub env: Environment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigurationView {
    pub clients: Vec<InstanceView>,
    pub services: Vec<InstanceView>,
    pub dependencies: Vec<BTreeSet<LabelDependency>>,
    pub complete: bool,
}

/// A step of a [`Configuration`], named by the transitions it fires. It is
/// re-evaluated when applied.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Move {
    Client {
        path: Vec<Side>,
        transition: usize,
    },
    ClientEmit {
        path: Vec<Side>,
        transition: usize,
        service: usize,
        service_transition: usize,
    },
    ClientReceive {
        path: Vec<Side>,
        transition: usize,
        service: usize,
        service_transition: usize,
    },
    Service {
        service: usize,
        transition: usize,
    },
    ServiceCom {
        sender: usize,
        sender_transition: usize,
        receiver: usize,
        receiver_transition: usize,
    },
}

/// A client label that could fire but is held back by dependencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockedLabel {
    pub label: QualifiedLabel,
    pub by: Vec<LabelDependency>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompositionError {
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(ProtocolId),
    #[error("no running instance `{0}`")]
    UnknownInstance(ProtocolId),
    #[error("`{instance}` has no dynamic context attribute `{name}`")]
    NotDynamic { instance: ProtocolId, name: String },
    #[error("`{name}` expects a {expected} value, got {found}")]
    ContextType { name: String, expected: String, found: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// A service instance and the client it serves (`None`: any client).
#[derive(Debug, Clone)]
pub struct ServiceInstance {
    pub state: ActiveState,
    pub client: Option<ProtocolId>,
}

/// Static part of an exploration: the initial configuration and which
/// services each client may talk to.
#[derive(Debug, Clone)]
pub struct System {
    pub initial: Configuration,
    service_client: Vec<Option<ProtocolId>>,
}

impl System {
    pub fn new(
        expr: &CompositionExpr,
        clients: &BTreeMap<ProtocolId, ActiveState>,
        services: Vec<ServiceInstance>,
    ) -> Result<System, CompositionError> {
        let client = CompositionState::initial(expr, &mut |p| clients.get(p).cloned())?;
        let service_client = services.iter().map(|s| s.client.clone()).collect();
        Ok(System {
            initial: Configuration {
                client,
                services: services.into_iter().map(|s| s.state).collect(),
            },
            service_client,
        })
    }

    fn serves(&self, service: usize, client: &ProtocolId) -> bool {
        match self.service_client.get(service) {
            Some(Some(c)) => c == client,
            Some(None) => true,
            None => false,
        }
    }

    /// Enabled moves in canonical order: client leaves left to right, each
    /// in transition order (partners in service order), then service steps.
    pub fn enabled(&self, c: &Configuration) -> Result<Vec<(ActionTag, Move)>, StepError> {
        let service_steps: Vec<Vec<Successor>> = c
            .services
            .iter()
            .map(crate::semantics::step_protocol)
            .collect::<Result<_, _>>()?;
        let mut out = Vec::new();
        for (path, leaf) in c.client.active_leaves() {
            for s in crate::semantics::step_protocol(leaf)? {
                let q = leaf.qualify(&s.label);
                if !c.client.blocking(&path, &q).is_empty() {
                    continue;
                }
                match &s.action {
                    Action::Internal => out.push((
                        ActionTag::Internal { by: q },
                        Move::Client {
                            path: path.clone(),
                            transition: s.transition,
                        },
                    )),
                    Action::Emit { operation, .. } | Action::Receive { operation, .. } => {
                        let emits = matches!(s.action, Action::Emit { .. });
                        for (k, steps) in service_steps.iter().enumerate() {
                            if !self.serves(k, &leaf.instance) {
                                continue;
                            }
                            for r in steps {
                                let ok = if emits {
                                    matches(&s.action, &r.action)
                                } else {
                                    matches(&r.action, &s.action)
                                };
                                if !ok {
                                    continue;
                                }
                                let sq = c.services[k].qualify(&r.label);
                                let (sender, receiver) = if emits { (q.clone(), sq) } else { (sq, q.clone()) };
                                let tag = ActionTag::Communication {
                                    operation: operation.clone(),
                                    sender,
                                    receiver,
                                };
                                let mv = if emits {
                                    Move::ClientEmit {
                                        path: path.clone(),
                                        transition: s.transition,
                                        service: k,
                                        service_transition: r.transition,
                                    }
                                } else {
                                    Move::ClientReceive {
                                        path: path.clone(),
                                        transition: s.transition,
                                        service: k,
                                        service_transition: r.transition,
                                    }
                                };
                                out.push((tag, mv));
                            }
                        }
                    }
                }
            }
        }
        for (i, steps) in service_steps.iter().enumerate() {
            for s in steps {
                match &s.action {
                    Action::Internal => out.push((
                        ActionTag::Internal {
                            by: c.services[i].qualify(&s.label),
                        },
                        Move::Service {
                            service: i,
                            transition: s.transition,
                        },
                    )),
                    Action::Emit { operation, .. } => {
                        for (j, rsteps) in service_steps.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            for r in rsteps.iter().filter(|r| matches(&s.action, &r.action)) {
                                out.push((
                                    ActionTag::Communication {
                                        operation: operation.clone(),
                                        sender: c.services[i].qualify(&s.label),
                                        receiver: c.services[j].qualify(&r.label),
                                    },
                                    Move::ServiceCom {
                                        sender: i,
                                        sender_transition: s.transition,
                                        receiver: j,
                                        receiver_transition: r.transition,
                                    },
                                ));
                            }
                        }
                    }
                    Action::Receive { .. } => {}
                }
            }
        }
        Ok(out)
    }

    /// Client labels whose transitions are enabled but held back by a
    /// dependency, whether or not a partner is ready.
    pub fn blocked(&self, c: &Configuration) -> Result<Vec<BlockedLabel>, StepError> {
        let mut out = Vec::new();
        for (path, leaf) in c.client.active_leaves() {
            for s in crate::semantics::step_protocol(leaf)? {
                let q = leaf.qualify(&s.label);
                let by = c.client.blocking(&path, &q);
                if !by.is_empty() && !out.iter().any(|b: &BlockedLabel| b.label == q) {
                    out.push(BlockedLabel { label: q, by });
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, c: &Configuration, m: &Move) -> Result<Configuration, StepError> {
        let not_enabled = || StepError::NotEnabled(format!("{m:?}"));
        let client_fire = |path: &[Side], transition: usize| -> Result<(&ActiveState, Successor, QualifiedLabel, bool), StepError> {
            let leaf = c.client.leaf_at(path).ok_or_else(not_enabled)?;
            if !c.client.active_leaves().iter().any(|(p, _)| p == path) {
                return Err(not_enabled());
            }
            let s = fire(leaf, transition)?.ok_or_else(not_enabled)?;
            let q = leaf.qualify(&s.label);
            if !c.client.blocking(path, &q).is_empty() {
                return Err(not_enabled());
            }
            let in_loop = leaf.protocol.label_in_loop(&s.label).unwrap_or(false);
            Ok((leaf, s, q, in_loop))
        };
        let service_fire = |k: usize, t: usize| -> Result<(&ActiveState, Successor), StepError> {
            let a = c.services.get(k).ok_or_else(not_enabled)?;
            Ok((a, fire(a, t)?.ok_or_else(not_enabled)?))
        };
        let mut next = c.clone();
        match m {
            Move::Client { path, transition } => {
                let (_, s, q, in_loop) = client_fire(path, *transition)?;
                if s.action != Action::Internal {
                    return Err(not_enabled());
                }
                next.client = c.client.advance(path, &q, in_loop, s.next);
            }
            Move::ClientEmit {
                path,
                transition,
                service,
                service_transition,
            } => {
                let (leaf, s, q, in_loop) = client_fire(path, *transition)?;
                if !self.serves(*service, &leaf.instance) {
                    return Err(not_enabled());
                }
                let (sa, r) = service_fire(*service, *service_transition)?;
                let env = communicate(leaf, &s.action, sa, &r.action)?.ok_or_else(not_enabled)?;
                next.client = c.client.advance(path, &q, in_loop, s.next);
                let mut rn = r.next;
                rn.env = env;
                next.services[*service] = rn;
            }
            Move::ClientReceive {
                path,
                transition,
                service,
                service_transition,
            } => {
                let (leaf, s, q, in_loop) = client_fire(path, *transition)?;
                if !self.serves(*service, &leaf.instance) {
                    return Err(not_enabled());
                }
                let (sa, e) = service_fire(*service, *service_transition)?;
                let env = communicate(sa, &e.action, leaf, &s.action)?.ok_or_else(not_enabled)?;
                let mut ln = s.next;
                ln.env = env;
                next.client = c.client.advance(path, &q, in_loop, ln);
                next.services[*service] = e.next;
            }
            Move::Service { service, transition } => {
                let (_, s) = service_fire(*service, *transition)?;
                if s.action != Action::Internal {
                    return Err(not_enabled());
                }
                next.services[*service] = s.next;
            }
            Move::ServiceCom {
                sender,
                sender_transition,
                receiver,
                receiver_transition,
            } => {
                if sender == receiver {
                    return Err(not_enabled());
                }
                let (sa, s) = service_fire(*sender, *sender_transition)?;
                let (ra, r) = service_fire(*receiver, *receiver_transition)?;
                let env = communicate(sa, &s.action, ra, &r.action)?.ok_or_else(not_enabled)?;
                next.services[*sender] = s.next;
                let mut rn = r.next;
                rn.env = env;
                next.services[*receiver] = rn;
            }
        }
        Ok(next)
    }

    /// External change of a dynamic context attribute of every running
    /// instance named `instance`.
    pub fn update_context(
        &self,
        c: &Configuration,
        instance: &ProtocolId,
        name: &str,
        value: Value,
    ) -> Result<Configuration, CompositionError> {
        let mut next = c.clone();
        let mut found = false;
        let mut targets: Vec<&mut ActiveState> = next.client.all_leaves_mut();
        targets.extend(next.services.iter_mut());
        for a in targets.into_iter().filter(|a| &a.instance == instance) {
            found = true;
            let attr = a
                .protocol
                .context
                .get(name)
                .filter(|at| at.kind == AttributeKind::Dynamic)
                .ok_or_else(|| CompositionError::NotDynamic {
                    instance: instance.clone(),
                    name: name.to_owned(),
                })?;
            if value.type_name() != attr.value.type_name() {
                return Err(CompositionError::ContextType {
                    name: name.to_owned(),
                    expected: attr.value.type_name().to_string(),
                    found: value.type_name().to_string(),
                });
            }
            let var = Variable::context(name, attr.value.type_name());
            a.env = a.env.dynamic_update(&var, value.clone())?;
        }
        if found {
            Ok(next)
        } else {
            Err(CompositionError::UnknownInstance(instance.clone()))
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "L",
            Side::Right => "R",
        })
    }
}
