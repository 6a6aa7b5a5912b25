//! Client compositions (sequence, choice, parallel with dependencies), their
//! step rules, and bounded exploration against service protocols.

mod explore;
mod expr;
mod system;

pub use explore::{
    explore, run_trace, ExplorationResult, ExplorationSummary, TraceError, TraceEvent, TraceRunner,
    DEFAULT_BOUND,
};
pub use expr::{CompositionExpr, CompositionSyntaxError};
pub use system::{
    remove, BlockedLabel, CompositionError, CompositionState, Configuration, ConfigurationView,
    InstanceView, Move, ServiceInstance, Side, System,
};

use crate::dependency::DependencyError;
use crate::model::{Protocol, ProtocolId};
use crate::verification::{verify_in, DeadlockReport};

/// Verifies the dependency set of every parallel node. Execution should be
/// refused when the merged report is not empty, unless forced.
pub fn verification_gate<'p>(
    expr: &CompositionExpr,
    lookup: &dyn Fn(&ProtocolId) -> Option<&'p Protocol>,
) -> Result<DeadlockReport, DependencyError> {
    let mut report = DeadlockReport::default();
    for (leaves, deps) in expr.parallel_nodes() {
        let protocols: Vec<&Protocol> = leaves.into_iter().filter_map(lookup).collect();
        let r = verify_in(&protocols, deps)?;
        report.conflicts.extend(r.conflicts);
        report.chain_warnings.extend(r.chain_warnings);
    }
    report.conflicts.sort();
    report.conflicts.dedup();
    report.chain_warnings.sort();
    report.chain_warnings.dedup();
    Ok(report)
}
