use std::collections::{BTreeSet, HashMap, VecDeque};
use std::time::{Duration, Instant};

use super::StackAction;
use crate::absint::{abs_step, needs_top, AAction, AFrame, AStore, AValue, ControlState, Policy, Target};
use crate::agc::{gc, Liveness};
use crate::ir::{ClassId, MethodId, Program, StmtId};

pub type NodeId = u32;
pub type FrameId = u32;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    State(ControlState),
    /// Sink for exceptions that escape the bottom of the stack.
    Uncaught { throw: StmtId, values: AValue },
}

impl Node {
    pub fn state(&self) -> Option<&ControlState> {
        match self {
            Node::State(s) => Some(s),
            Node::Uncaught { .. } => None,
        }
    }

    pub fn code(&self) -> StmtId {
        match self {
            Node::State(s) => s.code,
            Node::Uncaught { throw, .. } => *throw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsgConfig {
    pub policy: Policy,
    /// Collect garbage before each transition.
    pub gc: bool,
    /// Restrict collection roots to live registers. Implies `gc`.
    pub lra: bool,
    /// Share one global store across all nodes.
    pub widen_store: bool,
    pub node_budget: usize,
    pub time_budget: Option<Duration>,
}

impl Default for DsgConfig {
    fn default() -> Self {
        DsgConfig {
            policy: Policy::ZeroCfa,
            gc: false,
            lra: false,
            widen_store: false,
            node_budget: 1_000_000,
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DsgError {
    #[error("store widening cannot be combined with garbage collection")]
    WidenWithGc,
}

/// A Dyck state graph. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct Dsg {
    pub nodes: Vec<Node>,
    /// Stack alphabet, indexed by frame id.
    pub frames: Vec<AFrame>,
    /// Stack-action edges.
    pub edges: BTreeSet<(NodeId, StackAction<FrameId>, NodeId)>,
    /// ε-summary edges for balanced push/pop paths.
    pub summaries: BTreeSet<(NodeId, NodeId)>,
    /// Transitive ε-successors (over ε edges and summaries), irreflexive.
    pub eps_closure: Vec<BTreeSet<NodeId>>,
    /// Frames that may be on top of the stack at each node.
    pub tops: Vec<BTreeSet<FrameId>>,
    /// Whether the stack may be empty at each node.
    pub empty: Vec<bool>,
    /// (throw statement, handler label) pairs dispatched during synthesis.
    pub ec_links: BTreeSet<(StmtId, StmtId)>,
    /// (call site, receiver class) pairs with no resolvable target.
    pub unresolved: BTreeSet<(StmtId, ClassId)>,
    /// The shared store when widening.
    pub global_store: Option<AStore>,
    pub incomplete: bool,
}

impl Dsg {
    pub const ROOT: NodeId = 0;

    pub fn frame_id(&self, f: &AFrame) -> Option<FrameId> {
        self.frames.iter().position(|g| g == f).map(|i| i as FrameId)
    }

    pub fn node_id(&self, n: &Node) -> Option<NodeId> {
        self.nodes.iter().position(|m| m == n).map(|i| i as NodeId)
    }

    /// Every store a node may carry: its own, or the global one when widening.
    pub fn store_of(&self, n: NodeId) -> Option<&AStore> {
        match (&self.nodes[n as usize], &self.global_store) {
            (Node::State(_), Some(g)) => Some(g),
            (Node::State(s), None) => Some(&s.store),
            _ => None,
        }
    }
}

struct Engine<'p> {
    p: &'p Program,
    cfg: DsgConfig,
    liveness: Option<Liveness>,
    deadline: Option<Instant>,
    g: Dsg,
    index: HashMap<Node, NodeId>,
    frame_index: HashMap<AFrame, FrameId>,
    push_in: Vec<Vec<(NodeId, FrameId)>>,
    pop_out: Vec<Vec<(FrameId, NodeId)>>,
    eps_pred: Vec<BTreeSet<NodeId>>,
    /// Expansions performed per node: `None` is the empty stack, or any
    /// stack for top-independent statements.
    done: Vec<BTreeSet<Option<FrameId>>>,
    /// Frames used as collection roots at each node's last expansion.
    gc_frames: Vec<BTreeSet<FrameId>>,
    work: VecDeque<(NodeId, Option<FrameId>)>,
    pending: VecDeque<(NodeId, NodeId)>,
    widened: bool,
}

/// Builds the Dyck state graph of `entry` by saturating the work-list until
/// no node, edge or summary can be added.
pub fn synthesize_dsg(p: &Program, entry: MethodId, cfg: DsgConfig) -> Result<Dsg, DsgError> {
    if cfg.widen_store && (cfg.gc || cfg.lra) {
        return Err(DsgError::WidenWithGc);
    }
    let cfg = DsgConfig {
        gc: cfg.gc || cfg.lra,
        ..cfg
    };
    let mut e = Engine {
        p,
        cfg,
        liveness: cfg.lra.then(|| Liveness::for_program(p)),
        deadline: cfg.time_budget.map(|d| Instant::now() + d),
        g: Dsg {
            nodes: Vec::new(),
            frames: Vec::new(),
            edges: BTreeSet::new(),
            summaries: BTreeSet::new(),
            eps_closure: Vec::new(),
            tops: Vec::new(),
            empty: Vec::new(),
            ec_links: BTreeSet::new(),
            unresolved: BTreeSet::new(),
            global_store: cfg.widen_store.then(AStore::new),
            incomplete: false,
        },
        index: HashMap::new(),
        frame_index: HashMap::new(),
        push_in: Vec::new(),
        pop_out: Vec::new(),
        eps_pred: Vec::new(),
        done: Vec::new(),
        gc_frames: Vec::new(),
        work: VecDeque::new(),
        pending: VecDeque::new(),
        widened: false,
    };
    let root = e.intern(Node::State(crate::absint::abs_inject(p, entry)));
    e.set_empty(root.expect("the root fits any budget"));
    e.run();
    Ok(e.g)
}

impl Engine<'_> {
    fn out_of_budget(&mut self) -> bool {
        if self.g.incomplete {
            return true;
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.g.incomplete = true;
        }
        self.g.incomplete
    }

    fn run(&mut self) {
        loop {
            while let Some((n, top)) = self.work.pop_front() {
                if self.out_of_budget() {
                    return;
                }
                self.expand(n, top);
            }
            // Work left over from a store that grew or roots that widened.
            let mut again = Vec::new();
            if self.widened {
                self.widened = false;
                for n in 0..self.g.nodes.len() {
                    again.extend(self.done[n].iter().map(|&t| (n as NodeId, t)));
                }
            } else if self.cfg.gc {
                for n in 0..self.g.nodes.len() as NodeId {
                    if self.done[n as usize].is_empty() {
                        continue;
                    }
                    if self.stack_frames(n) != self.gc_frames[n as usize] {
                        again.extend(self.done[n as usize].iter().map(|&t| (n, t)));
                    }
                }
            }
            if again.is_empty() {
                return;
            }
            self.work.extend(again);
        }
    }

    fn intern(&mut self, node: Node) -> Option<NodeId> {
        if let Some(&id) = self.index.get(&node) {
            return Some(id);
        }
        if self.g.nodes.len() >= self.cfg.node_budget.max(1) {
            self.g.incomplete = true;
            return None;
        }
        let id = self.g.nodes.len() as NodeId;
        let independent = match &node {
            Node::State(s) => !needs_top(self.p.stmt(s.code)),
            Node::Uncaught { .. } => false,
        };
        self.index.insert(node.clone(), id);
        self.g.nodes.push(node);
        self.g.eps_closure.push(BTreeSet::new());
        self.g.tops.push(BTreeSet::new());
        self.g.empty.push(false);
        self.push_in.push(Vec::new());
        self.pop_out.push(Vec::new());
        self.eps_pred.push(BTreeSet::new());
        self.done.push(BTreeSet::new());
        self.gc_frames.push(BTreeSet::new());
        if independent {
            self.work.push_back((id, None));
        }
        Some(id)
    }

    fn intern_frame(&mut self, f: AFrame) -> FrameId {
        if let Some(&id) = self.frame_index.get(&f) {
            return id;
        }
        let id = self.g.frames.len() as FrameId;
        self.frame_index.insert(f.clone(), id);
        self.g.frames.push(f);
        id
    }

    fn needs_top(&self, n: NodeId) -> bool {
        match &self.g.nodes[n as usize] {
            Node::State(s) => needs_top(self.p.stmt(s.code)),
            Node::Uncaught { .. } => false,
        }
    }

    fn add_top(&mut self, n: NodeId, f: FrameId) {
        if self.g.tops[n as usize].insert(f) && self.needs_top(n) {
            self.work.push_back((n, Some(f)));
        }
    }

    fn set_empty(&mut self, n: NodeId) {
        if !self.g.empty[n as usize] {
            self.g.empty[n as usize] = true;
            if self.needs_top(n) {
                self.work.push_back((n, None));
            }
        }
    }

    /// Frames that may appear anywhere on a stack realizable at `n`.
    fn stack_frames(&self, n: NodeId) -> BTreeSet<FrameId> {
        let mut frames = BTreeSet::new();
        let mut seen: BTreeSet<NodeId> = [n].into();
        let mut work = vec![n];
        while let Some(x) = work.pop() {
            for z in std::iter::once(x).chain(self.eps_pred[x as usize].iter().copied()) {
                for &(p, f) in &self.push_in[z as usize] {
                    frames.insert(f);
                    if seen.insert(p) {
                        work.push(p);
                    }
                }
            }
        }
        frames
    }

    fn expand(&mut self, n: NodeId, top: Option<FrameId>) {
        self.done[n as usize].insert(top);
        let Node::State(state) = &self.g.nodes[n as usize] else {
            return;
        };
        let mut state = state.clone();
        if let Some(global) = &self.g.global_store {
            state.store = global.clone();
        }
        if self.cfg.gc {
            let frames = self.stack_frames(n);
            let kont: Vec<&AFrame> = frames.iter().map(|&f| &self.g.frames[f as usize]).collect();
            state = gc(&state, kont, self.liveness.as_ref());
            self.gc_frames[n as usize] = frames;
        }
        let top_frame = top.map(|f| self.g.frames[f as usize].clone());
        let out = abs_step(self.p, self.cfg.policy, &state, top_frame.as_ref());
        self.g.unresolved.extend(out.unresolved);
        for t in out.transitions {
            if let Some(link) = t.ec_link {
                self.g.ec_links.insert(link);
            }
            let target = match t.target {
                Target::State(mut s) => {
                    if let Some(global) = &mut self.g.global_store {
                        self.widened |= global.join_store(&s.store);
                        s.store = AStore::new();
                    }
                    Node::State(s)
                }
                Target::Uncaught { throw, values } => Node::Uncaught { throw, values },
            };
            let Some(m) = self.intern(target) else { continue };
            let action = match t.action {
                AAction::Eps => StackAction::Eps,
                AAction::Push(f) => StackAction::Push(self.intern_frame(f)),
                AAction::Pop(f) => StackAction::Pop(self.intern_frame(f)),
            };
            self.add_edge(n, action, m);
        }
    }

    fn add_edge(&mut self, n: NodeId, action: StackAction<FrameId>, m: NodeId) {
        if !self.g.edges.insert((n, action, m)) {
            return;
        }
        match action {
            StackAction::Eps => self.pending.push_back((n, m)),
            StackAction::Push(f) => {
                self.push_in[m as usize].push((n, f));
                let reach: Vec<NodeId> = std::iter::once(m)
                    .chain(self.g.eps_closure[m as usize].iter().copied())
                    .collect();
                for y in reach {
                    self.add_top(y, f);
                    let returns: Vec<NodeId> = self.pop_out[y as usize]
                        .iter()
                        .filter(|&&(g, _)| g == f)
                        .map(|&(_, r)| r)
                        .collect();
                    for r in returns {
                        self.summary(n, r);
                    }
                }
            }
            StackAction::Pop(f) => {
                self.pop_out[n as usize].push((f, m));
                let reach: Vec<NodeId> = std::iter::once(n)
                    .chain(self.eps_pred[n as usize].iter().copied())
                    .collect();
                for x in reach {
                    let callers: Vec<NodeId> = self.push_in[x as usize]
                        .iter()
                        .filter(|&&(_, g)| g == f)
                        .map(|&(p, _)| p)
                        .collect();
                    for p in callers {
                        self.summary(p, m);
                    }
                }
            }
        }
        self.drain();
    }

    fn summary(&mut self, p: NodeId, q: NodeId) {
        if self.g.summaries.insert((p, q)) {
            self.pending.push_back((p, q));
        }
    }

    /// Closes the ε relation under every pending ε edge.
    fn drain(&mut self) {
        while let Some((u, v)) = self.pending.pop_front() {
            if u == v || self.g.eps_closure[u as usize].contains(&v) {
                continue;
            }
            let xs: Vec<NodeId> = std::iter::once(u)
                .chain(self.eps_pred[u as usize].iter().copied())
                .collect();
            let ys: Vec<NodeId> = std::iter::once(v)
                .chain(self.g.eps_closure[v as usize].iter().copied())
                .collect();
            for &x in &xs {
                for &y in &ys {
                    if x == y || !self.g.eps_closure[x as usize].insert(y) {
                        continue;
                    }
                    self.eps_pred[y as usize].insert(x);
                    if self.g.empty[x as usize] {
                        self.set_empty(y);
                    }
                    let tops: Vec<FrameId> = self.g.tops[x as usize].iter().copied().collect();
                    for f in tops {
                        self.add_top(y, f);
                    }
                    for i in 0..self.push_in[x as usize].len() {
                        let (p, f) = self.push_in[x as usize][i];
                        for j in 0..self.pop_out[y as usize].len() {
                            let (g, r) = self.pop_out[y as usize][j];
                            if g == f {
                                self.summary(p, r);
                            }
                        }
                    }
                }
            }
        }
    }
}
