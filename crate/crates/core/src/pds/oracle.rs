//! Brute-force reachability with explicit stacks. Used only to check the
//! summarizing engine on small programs.

use std::collections::{BTreeSet, VecDeque};

use super::dsg::{Dsg, FrameId, Node, NodeId};
use super::StackAction;
use crate::absint::{abs_inject, abs_step, AAction, AFrame, Policy, Target};
use crate::ir::{MethodId, Program};

/// Configurations reached by the explicit-stack search. Stacks are bottom
/// first.
#[derive(Debug, Clone, Default)]
pub struct PdsOracle {
    pub configs: BTreeSet<(Node, Vec<AFrame>)>,
    pub nodes: BTreeSet<Node>,
    /// Set when some push was cut off by the depth bound.
    pub truncated: bool,
}

fn successors(p: &Program, policy: Policy, node: &Node, top: Option<&AFrame>) -> Vec<(AAction, Node)> {
    let Node::State(s) = node else {
        return Vec::new();
    };
    abs_step(p, policy, s, top)
        .transitions
        .into_iter()
        .map(|t| {
            let n = match t.target {
                Target::State(s) => Node::State(s),
                Target::Uncaught { throw, values } => Node::Uncaught { throw, values },
            };
            (t.action, n)
        })
        .collect()
}

/// Breadth-first search over (control state, stack) pairs of the pushdown
/// system generated by the abstract stepper, with stacks of at most
/// `depth` frames.
pub fn pds_oracle(p: &Program, entry: MethodId, policy: Policy, depth: usize) -> PdsOracle {
    let mut out = PdsOracle::default();
    let start = (Node::State(abs_inject(p, entry)), Vec::new());
    let mut work = VecDeque::from([start.clone()]);
    out.configs.insert(start);
    while let Some((node, stack)) = work.pop_front() {
        out.nodes.insert(node.clone());
        for (action, next) in successors(p, policy, &node, stack.last()) {
            let mut stack = stack.clone();
            match action {
                AAction::Eps => {}
                AAction::Push(f) => {
                    if stack.len() >= depth {
                        out.truncated = true;
                        continue;
                    }
                    stack.push(f);
                }
                AAction::Pop(f) => {
                    if stack.pop().as_ref() != Some(&f) {
                        continue;
                    }
                }
            }
            let c = (next, stack);
            if out.configs.insert(c.clone()) {
                work.push_back(c);
            }
        }
    }
    out
}

/// Nodes reachable from `(node, base)` without popping any frame of
/// `base`, arriving with `base` intact. The start node itself is excluded
/// unless a non-empty path returns to it.
pub fn balanced_reach(
    p: &Program,
    policy: Policy,
    node: &Node,
    base: &[AFrame],
    depth: usize,
) -> BTreeSet<Node> {
    let mut seen: BTreeSet<(Node, Vec<AFrame>)> = BTreeSet::new();
    let mut out = BTreeSet::new();
    let mut work = VecDeque::from([(node.clone(), Vec::<AFrame>::new())]);
    while let Some((n, local)) = work.pop_front() {
        let top = local.last().or(base.last());
        for (action, next) in successors(p, policy, &n, top) {
            let mut local = local.clone();
            match action {
                AAction::Eps => {}
                AAction::Push(f) => {
                    if base.len() + local.len() >= depth {
                        continue;
                    }
                    local.push(f);
                }
                AAction::Pop(_) => {
                    if local.pop().is_none() {
                        continue;
                    }
                }
            }
            if local.is_empty() {
                out.insert(next.clone());
            }
            let c = (next, local);
            if seen.insert(c.clone()) {
                work.push_back(c);
            }
        }
    }
    out
}

/// Breadth-first search over the action edges of a synthesized graph with
/// explicit stacks (bottom first) of at most `depth` frames.
pub fn dsg_oracle(g: &Dsg, depth: usize) -> BTreeSet<(NodeId, Vec<FrameId>)> {
    let mut out_edges: Vec<Vec<(StackAction<FrameId>, NodeId)>> = vec![Vec::new(); g.nodes.len()];
    for &(from, a, to) in &g.edges {
        out_edges[from as usize].push((a, to));
    }
    let start = (Dsg::ROOT, Vec::new());
    let mut seen = BTreeSet::from([start.clone()]);
    let mut work = VecDeque::from([start]);
    while let Some((n, stack)) = work.pop_front() {
        for &(a, m) in &out_edges[n as usize] {
            let mut stack = stack.clone();
            match a {
                StackAction::Eps => {}
                StackAction::Push(f) => {
                    if stack.len() >= depth {
                        continue;
                    }
                    stack.push(f);
                }
                StackAction::Pop(f) => {
                    if stack.pop() != Some(f) {
                        continue;
                    }
                }
            }
            let c = (m, stack);
            if seen.insert(c.clone()) {
                work.push_back(c);
            }
        }
    }
    seen
}
