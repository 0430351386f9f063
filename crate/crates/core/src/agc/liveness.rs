use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ir::{MethodId, Program, Reg, Stmt, StmtId};

/// Registers live before each statement, for every method of a program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Liveness {
    live: BTreeMap<StmtId, BTreeSet<Reg>>,
}

impl Liveness {
    pub fn for_program(p: &Program) -> Self {
        let mut live = BTreeMap::new();
        for m in p.method_ids() {
            live.extend(live_registers(p, m));
        }
        Liveness { live }
    }

    pub fn is_live(&self, at: StmtId, r: Reg) -> bool {
        r == Reg::Ret || r == Reg::Exn || self.live.get(&at).is_some_and(|s| s.contains(&r))
    }

    pub fn live_at(&self, at: StmtId) -> Option<&BTreeSet<Reg>> {
        self.live.get(&at)
    }
}

/// Registers read and written by one statement. A throw reads every
/// register: its handler may run in this frame and read anything.
pub fn uses_defs(p: &Program, sid: StmtId) -> (Vec<Reg>, Option<Reg>) {
    let mut uses = Vec::new();
    let def = match p.stmt(sid) {
        Stmt::Assign { dst, src } => {
            src.registers(&mut uses);
            Some(*dst)
        }
        Stmt::New { dst, .. } => Some(*dst),
        Stmt::FieldGet { dst, obj, .. } => {
            obj.registers(&mut uses);
            Some(*dst)
        }
        Stmt::FieldPut { obj, value, .. } => {
            obj.registers(&mut uses);
            value.registers(&mut uses);
            None
        }
        Stmt::Invoke(call) => {
            call.args.iter().for_each(|a| a.registers(&mut uses));
            Some(Reg::Ret)
        }
        Stmt::If { cond, .. } => {
            cond.registers(&mut uses);
            None
        }
        Stmt::Return(e) => {
            e.registers(&mut uses);
            None
        }
        Stmt::Throw(e) => {
            e.registers(&mut uses);
            uses.extend(p.method(p.record(sid).method).all_registers());
            None
        }
        Stmt::Label(_) | Stmt::Nop | Stmt::Line(_) | Stmt::Goto(_) | Stmt::PushHandler { .. } | Stmt::PopHandler => None,
    };
    (uses, def)
}

/// Intra-procedural successors: fall-through plus goto and if targets.
pub fn successors(p: &Program, sid: StmtId) -> Vec<StmtId> {
    let m = p.record(sid).method;
    match p.stmt(sid) {
        Stmt::Goto(l) => p.label_target(m, l).into_iter().collect(),
        Stmt::If { target, .. } => p.next(sid).into_iter().chain(p.label_target(m, target)).collect(),
        Stmt::Return(_) | Stmt::Throw(_) => Vec::new(),
        _ => p.next(sid).into_iter().collect(),
    }
}

/// Backward dataflow fixpoint: live(s) = use(s) ∪ (⋃ live(succ) ∖ def(s)),
/// with `ret` and `exn` live everywhere.
pub fn live_registers(p: &Program, m: MethodId) -> BTreeMap<StmtId, BTreeSet<Reg>> {
    let body: Vec<StmtId> = p.method(m).body().collect();
    let mut preds: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for &s in &body {
        for t in successors(p, s) {
            preds.entry(t).or_default().push(s);
        }
    }
    let always: BTreeSet<Reg> = [Reg::Ret, Reg::Exn].into();
    let mut live: BTreeMap<StmtId, BTreeSet<Reg>> =
        body.iter().map(|&s| (s, always.clone())).collect();
    let mut work: VecDeque<StmtId> = body.iter().rev().copied().collect();
    while let Some(s) = work.pop_front() {
        let (uses, def) = uses_defs(p, s);
        let mut new: BTreeSet<Reg> = always.clone();
        for t in successors(p, s) {
            new.extend(live[&t].iter().filter(|&&r| Some(r) != def));
        }
        new.extend(uses);
        if new != live[&s] {
            live.insert(s, new);
            work.extend(preds.get(&s).into_iter().flatten());
        }
    }
    live
}
