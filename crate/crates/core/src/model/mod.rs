//! Interface model: context profiles, signatures, labels and protocols,
//! plus the structural queries the analyses are built on.

mod expr;
mod ids;
mod label;
mod protocol;
mod value;

pub use expr::{Builtin, ExprSyntaxError, Expression, Variable};
pub use ids::{LabelId, ProtocolId, QualifiedLabel, StateId, TypeName};
pub use label::{Argument, Direction, Label, LabelAction};
pub use protocol::{
    arguments, validate_protocol, AttributeKind, ContextAttribute, ContextProfile, Diagnostic,
    ModelError, OperationProfile, Parameter, Protocol, ProtocolBuilder, Signature, Transition,
    Visibility,
};
pub use value::Value;
