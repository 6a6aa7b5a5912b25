//! Evaluation, environments, and the single- and n-protocol step relations.

mod eval;
mod step;

pub use eval::{dynamic_update, ev, ev_c, guard_holds, overload, Environment, EvalError};
pub use step::{
    communicate, fire, matches, step_protocol, step_system, Action, ActionTag, ActiveState,
    StepError, Successor, SystemConfig, SystemMove,
};
