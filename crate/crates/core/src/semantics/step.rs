use std::cmp::Ordering;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::eval::{ev, ev_c, guard_holds, Environment, EvalError};
use crate::model::{
    Direction, Expression, LabelAction, LabelId, Protocol, ProtocolId, QualifiedLabel, StateId,
    TypeName, Variable,
};

/// A running protocol instance: current state and environment.
#[derive(Debug, Clone)]
pub struct ActiveState {
    pub protocol: Arc<Protocol>,
    /// Distinguishes several instances of one protocol; defaults to the protocol id.
    pub instance: ProtocolId,
    pub state: StateId,
    pub env: Environment,
}

impl ActiveState {
    pub fn initial(protocol: Arc<Protocol>, env: Environment) -> Self {
        Self {
            instance: protocol.id.clone(),
            state: protocol.initial.clone(),
            protocol,
            env,
        }
    }

    pub fn with_instance(mut self, instance: impl Into<ProtocolId>) -> Self {
        self.instance = instance.into();
        self
    }

    pub fn is_final(&self) -> bool {
        self.protocol.is_final(&self.state)
    }

    pub fn qualify(&self, label: &LabelId) -> QualifiedLabel {
        QualifiedLabel {
            protocol: self.instance.clone(),
            label: label.clone(),
        }
    }

    fn key(&self) -> (&ProtocolId, &ProtocolId, &StateId, &Environment) {
        (&self.instance, &self.protocol.id, &self.state, &self.env)
    }
}

impl PartialEq for ActiveState {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for ActiveState {}

impl Hash for ActiveState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for ActiveState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ActiveState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// What a single protocol step offers to its partners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Internal,
    /// Payload after `ev`: regular variables are values, context variables
    /// are still symbolic. `types` are the declared payload types.
    Emit {
        operation: String,
        values: Vec<Expression>,
        types: Vec<TypeName>,
    },
    Receive {
        operation: String,
        vars: Vec<Variable>,
    },
}

#[derive(Debug, Clone)]
pub struct Successor {
    /// Index into the protocol's transition list.
    pub transition: usize,
    pub label: LabelId,
    pub action: Action,
    pub next: ActiveState,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("{instance}:{label}: {source}")]
    Eval {
        instance: ProtocolId,
        label: LabelId,
        source: EvalError,
    },
    #[error("move is not enabled in the current configuration: {0}")]
    NotEnabled(String),
}

/// Fires one transition of `a` if its source is the current state and its
/// guard holds.
pub fn fire(a: &ActiveState, transition: usize) -> Result<Option<Successor>, StepError> {
    let Some(t) = a.protocol.transitions.get(transition) else {
        return Ok(None);
    };
    if t.source != a.state {
        return Ok(None);
    }
    let Some(label) = a.protocol.label(&t.label) else {
        return Ok(None);
    };
    let wrap = |source| StepError::Eval {
        instance: a.instance.clone(),
        label: label.id.clone(),
        source,
    };
    if !guard_holds(&a.env, &label.guard).map_err(wrap)? {
        return Ok(None);
    }
    let action = match &label.action {
        LabelAction::Tau => Action::Internal,
        LabelAction::Event {
            operation,
            direction: Direction::Emission,
            payload,
        } => Action::Emit {
            operation: operation.clone(),
            values: payload
                .iter()
                .map(|arg| ev(&a.env, &arg.expr))
                .collect::<Result<_, _>>()
                .map_err(wrap)?,
            types: payload
                .iter()
                .map(|arg| arg.ty().unwrap_or_else(|| TypeName::new("unknown")))
                .collect(),
        },
        LabelAction::Event {
            operation,
            direction: Direction::Reception,
            payload,
        } => Action::Receive {
            operation: operation.clone(),
            vars: payload.iter().filter_map(|arg| arg.expr.as_var().cloned()).collect(),
        },
    };
    let mut next = a.clone();
    next.state = t.target.clone();
    Ok(Some(Successor {
        transition,
        label: label.id.clone(),
        action,
        next,
    }))
}

/// Single-protocol step relation: one successor per enabled transition, in
/// transition order. Environments are left untouched; receptions bind their
/// variables only when they synchronise.
pub fn step_protocol(a: &ActiveState) -> Result<Vec<Successor>, StepError> {
    let mut out = Vec::new();
    for (i, t) in a.protocol.transitions.iter().enumerate() {
        if t.source == a.state {
            if let Some(s) = fire(a, i)? {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Receiver-side environment after a synchronisation `op!values` / `op?vars`,
/// or `None` when the two actions do not match (name, arity, types).
///
/// Context variables left in the payload belong to the sender; their current
/// values are imported into the receiver's evaluation scope at this point.
pub fn communicate(
    sender: &ActiveState,
    emit: &Action,
    receiver: &ActiveState,
    receive: &Action,
) -> Result<Option<Environment>, StepError> {
    let (
        Action::Emit {
            operation, values, ..
        },
        Action::Receive { vars, .. },
    ) = (emit, receive)
    else {
        return Ok(None);
    };
    if !matches(emit, receive) {
        return Ok(None);
    }
    let mut scope = receiver.env.clone();
    for v in values {
        for var in v.variables() {
            if let Some(val) = sender.env.get(&var.name) {
                scope = scope.overload(&var.name, val.clone());
            }
        }
    }
    let mut env = receiver.env.clone();
    for (x, v) in vars.iter().zip(values) {
        let val = ev_c(&scope, v).map_err(|source| StepError::Eval {
            instance: receiver.instance.clone(),
            label: LabelId::new(operation.as_str()),
            source,
        })?;
        env = env.overload(&x.name, val);
    }
    Ok(Some(env))
}

/// Observable tag of a system step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum ActionTag {
    Internal {
        by: QualifiedLabel,
    },
    Communication {
        operation: String,
        sender: QualifiedLabel,
        receiver: QualifiedLabel,
    },
}

impl ActionTag {
    pub fn labels(&self) -> Vec<&QualifiedLabel> {
        match self {
            ActionTag::Internal { by } => vec![by],
            ActionTag::Communication { sender, receiver, .. } => vec![sender, receiver],
        }
    }
}

impl std::fmt::Display for ActionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActionTag::Internal { by } => write!(f, "tau({by})"),
            ActionTag::Communication {
                operation,
                sender,
                receiver,
            } => write!(f, "{operation}: {sender} -> {receiver}"),
        }
    }
}

/// Configuration of n protocols running side by side.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemConfig {
    pub actives: Vec<ActiveState>,
}

/// A step of a [`SystemConfig`], identified by the transitions it fires.
/// It is re-evaluated when applied, so context changes in between are seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemMove {
    Internal {
        actor: usize,
        transition: usize,
    },
    Communication {
        sender: usize,
        sender_transition: usize,
        receiver: usize,
        receiver_transition: usize,
    },
}

impl SystemConfig {
    pub fn new(actives: Vec<ActiveState>) -> Self {
        Self { actives }
    }

    pub fn all_final(&self) -> bool {
        self.actives.iter().all(ActiveState::is_final)
    }

    /// Enabled moves in canonical order: for each actor, its internal steps,
    /// then the communications in which it is the sender.
    pub fn enabled_moves(&self) -> Result<Vec<(ActionTag, SystemMove)>, StepError> {
        let steps = self
            .actives
            .iter()
            .map(step_protocol)
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for (i, succs) in steps.iter().enumerate() {
            for s in succs {
                match &s.action {
                    Action::Internal => out.push((
                        ActionTag::Internal {
                            by: self.actives[i].qualify(&s.label),
                        },
                        SystemMove::Internal {
                            actor: i,
                            transition: s.transition,
                        },
                    )),
                    Action::Emit { operation, .. } => {
                        for (j, rsuccs) in steps.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            for r in rsuccs {
                                if matches(&s.action, &r.action) {
                                    out.push((
                                        ActionTag::Communication {
                                            operation: operation.clone(),
                                            sender: self.actives[i].qualify(&s.label),
                                            receiver: self.actives[j].qualify(&r.label),
                                        },
                                        SystemMove::Communication {
                                            sender: i,
                                            sender_transition: s.transition,
                                            receiver: j,
                                            receiver_transition: r.transition,
                                        },
                                    ));
                                }
                            }
                        }
                    }
                    Action::Receive { .. } => {}
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, m: SystemMove) -> Result<SystemConfig, StepError> {
        let not_enabled = || StepError::NotEnabled(format!("{m:?}"));
        let mut next = self.clone();
        match m {
            SystemMove::Internal { actor, transition } => {
                let a = self.actives.get(actor).ok_or_else(not_enabled)?;
                let s = fire(a, transition)?.ok_or_else(not_enabled)?;
                if s.action != Action::Internal {
                    return Err(not_enabled());
                }
                next.actives[actor] = s.next;
            }
            SystemMove::Communication {
                sender,
                sender_transition,
                receiver,
                receiver_transition,
            } => {
                if sender == receiver {
                    return Err(not_enabled());
                }
                let sa = self.actives.get(sender).ok_or_else(not_enabled)?;
                let ra = self.actives.get(receiver).ok_or_else(not_enabled)?;
                let s = fire(sa, sender_transition)?.ok_or_else(not_enabled)?;
                let r = fire(ra, receiver_transition)?.ok_or_else(not_enabled)?;
                let env = communicate(sa, &s.action, ra, &r.action)?.ok_or_else(not_enabled)?;
                next.actives[sender] = s.next;
                let mut rn = r.next;
                rn.env = env;
                next.actives[receiver] = rn;
            }
        }
        Ok(next)
    }
}

/// Whether an emission and a reception can synchronise (name, arity, types).
pub fn matches(emit: &Action, receive: &Action) -> bool {
    match (emit, receive) {
        (
            Action::Emit {
                operation, types, ..
            },
            Action::Receive {
                operation: op2,
                vars,
            },
        ) => {
            if operation != op2 {
                return false;
            }
            if types.len() != vars.len() {
                log::warn!(
                    "arity mismatch on `{operation}`: {} values emitted, {} variables received",
                    types.len(),
                    vars.len()
                );
                return false;
            }
            types.iter().zip(vars).all(|(t, x)| t == &x.ty)
        }
        _ => false,
    }
}

/// n-protocol step relation: synchronous binary communication between two
/// distinct members, or an internal step of one member.
pub fn step_system(c: &SystemConfig) -> Result<Vec<(ActionTag, SystemConfig)>, StepError> {
    c.enabled_moves()?
        .into_iter()
        .map(|(tag, m)| Ok((tag, c.apply(m)?)))
        .collect()
}
