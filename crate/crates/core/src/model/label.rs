use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Expression, LabelId, TypeName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    Emission,
    Reception,
}

impl Direction {
    pub fn symbol(self) -> char {
        match self {
            Direction::Emission => '!',
            Direction::Reception => '?',
        }
    }
}

/// One payload element of an event label. The optional concept overrides
/// the ontology concept otherwise taken from the variable name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Argument {
    pub expr: Expression,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

impl Argument {
    pub fn new(expr: Expression) -> Self {
        Self { expr, concept: None }
    }

    pub fn with_concept(expr: Expression, concept: impl Into<String>) -> Self {
        Self {
            expr,
            concept: Some(concept.into()),
        }
    }

    pub fn concept(&self) -> Option<&str> {
        self.concept
            .as_deref()
            .or_else(|| self.expr.as_var().map(|v| v.name.as_str()))
    }

    pub fn ty(&self) -> Option<TypeName> {
        self.expr.static_type()
    }

    pub fn is_context(&self) -> bool {
        self.expr.as_var().is_some_and(|v| v.is_context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum LabelAction {
    Tau,
    Event {
        operation: String,
        direction: Direction,
        payload: Vec<Argument>,
    },
}

/// A transition label: an internal action or an event `[guard] op!args` /
/// `[guard] op?vars`. Identity is the id, never the structure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Label {
    pub id: LabelId,
    pub guard: Expression,
    pub action: LabelAction,
}

impl Label {
    pub fn tau(id: impl Into<LabelId>) -> Self {
        Self {
            id: id.into(),
            guard: Expression::truth(),
            action: LabelAction::Tau,
        }
    }

    pub fn event(
        id: impl Into<LabelId>,
        operation: impl Into<String>,
        direction: Direction,
        payload: Vec<Argument>,
    ) -> Self {
        Self {
            id: id.into(),
            guard: Expression::truth(),
            action: LabelAction::Event {
                operation: operation.into(),
                direction,
                payload,
            },
        }
    }

    pub fn emission(id: impl Into<LabelId>, operation: impl Into<String>, payload: Vec<Expression>) -> Self {
        Self::event(id, operation, Direction::Emission, payload.into_iter().map(Argument::new).collect())
    }

    pub fn reception(id: impl Into<LabelId>, operation: impl Into<String>, payload: Vec<Expression>) -> Self {
        Self::event(id, operation, Direction::Reception, payload.into_iter().map(Argument::new).collect())
    }

    pub fn guarded(mut self, guard: Expression) -> Self {
        self.guard = guard;
        self
    }

    pub fn is_tau(&self) -> bool {
        matches!(self.action, LabelAction::Tau)
    }

    pub fn operation(&self) -> Option<&str> {
        match &self.action {
            LabelAction::Event { operation, .. } => Some(operation),
            LabelAction::Tau => None,
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match &self.action {
            LabelAction::Event { direction, .. } => Some(*direction),
            LabelAction::Tau => None,
        }
    }

    pub fn payload(&self) -> &[Argument] {
        match &self.action {
            LabelAction::Event { payload, .. } => payload,
            LabelAction::Tau => &[],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.guard.is_true_literal() {
            write!(f, "[{}] ", self.guard)?;
        }
        match &self.action {
            LabelAction::Tau => f.write_str("tau"),
            LabelAction::Event {
                operation,
                direction,
                payload,
            } => {
                write!(f, "{operation}{}", direction.symbol())?;
                for (i, a) in payload.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}", a.expr)?;
                }
                Ok(())
            }
        }
    }
}
