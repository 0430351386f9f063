//! Pushdown systems over the abstract machine and Dyck state graph
//! synthesis.
//!
//! Stack actions over a frame alphabet `G` are [`StackAction`]s. The
//! [`synthesize_dsg`] engine explores control states reachable over legal
//! stack-action paths and records ε-summary edges for balanced ones.

mod dot;
mod dsg;
mod oracle;

pub use dot::{emit_dot, emit_dot_all, node_label};
pub use dsg::{synthesize_dsg, Dsg, DsgConfig, DsgError, FrameId, Node, NodeId};
pub use oracle::{balanced_reach, dsg_oracle, pds_oracle, PdsOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StackAction<G> {
    Eps,
    Push(G),
    Pop(G),
}

/// Cancels adjacent push/pop pairs of the same frame and drops ε until
/// no rewrite applies.
pub fn net<G: Clone + PartialEq>(actions: &[StackAction<G>]) -> Vec<StackAction<G>> {
    let mut out: Vec<StackAction<G>> = Vec::with_capacity(actions.len());
    for a in actions {
        match a {
            StackAction::Eps => {}
            StackAction::Pop(g) if matches!(out.last(), Some(StackAction::Push(h)) if h == g) => {
                out.pop();
            }
            other => out.push(other.clone()),
        }
    }
    out
}

/// The stack an action string leaves behind, top first. `None` when the
/// net form still contains a pop.
pub fn stackify<G: Clone + PartialEq>(actions: &[StackAction<G>]) -> Option<Vec<G>> {
    let mut frames = net(actions)
        .into_iter()
        .map(|a| match a {
            StackAction::Push(g) => Some(g),
            _ => None,
        })
        .collect::<Option<Vec<G>>>()?;
    frames.reverse();
    Some(frames)
}
