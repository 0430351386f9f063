//! Abstract garbage collection: restrict a store to the addresses reachable
//! from the current frame and the frames below it on the stack.
//!
//! Roots are every bound register of the current frame, or with a
//! [`Liveness`] table only those live at the current statement, plus every
//! bound register of each call frame on the stack.

mod liveness;

use std::collections::BTreeSet;

use crate::absint::{AAddr, AFrame, AStore, AVal, ControlState};

pub use liveness::{live_registers, successors, uses_defs, Liveness};

/// Field addresses of every object `a` may point to.
pub fn addr_adjacent(a: &AAddr, store: &AStore) -> BTreeSet<AAddr> {
    let mut out = BTreeSet::new();
    for v in store.get(a).into_iter().flatten() {
        if let AVal::Obj(op, _) = v {
            out.extend(store.fields_of(op).cloned());
        }
    }
    out
}

/// Bound registers of every call frame in `kont`; handler frames
/// contribute nothing.
pub fn stack_root<'a>(kont: impl IntoIterator<Item = &'a AFrame>, store: &AStore) -> BTreeSet<AAddr> {
    let mut out = BTreeSet::new();
    for f in kont {
        if let AFrame::Fun { fp, .. } = f {
            out.extend(store.regs_of(fp).cloned());
        }
    }
    out
}

pub fn root<'a>(
    s: &ControlState,
    kont: impl IntoIterator<Item = &'a AFrame>,
    liveness: Option<&Liveness>,
) -> BTreeSet<AAddr> {
    let mut out: BTreeSet<AAddr> = s
        .store
        .regs_of(&s.fp)
        .filter(|a| match (a, liveness) {
            (AAddr::Reg(_, r), Some(l)) => l.is_live(s.code, *r),
            _ => true,
        })
        .cloned()
        .collect();
    out.extend(stack_root(kont, &s.store));
    out
}

pub fn reachable<'a>(
    s: &ControlState,
    kont: impl IntoIterator<Item = &'a AFrame>,
    liveness: Option<&Liveness>,
) -> BTreeSet<AAddr> {
    let mut seen = root(s, kont, liveness);
    let mut work: Vec<AAddr> = seen.iter().cloned().collect();
    while let Some(a) = work.pop() {
        for b in addr_adjacent(&a, &s.store) {
            if seen.insert(b.clone()) {
                work.push(b);
            }
        }
    }
    seen
}

/// The state with its store restricted to [`reachable`] addresses. `kont`
/// may be any superset of the frames on the realizable stacks.
pub fn gc<'a>(
    s: &ControlState,
    kont: impl IntoIterator<Item = &'a AFrame>,
    liveness: Option<&Liveness>,
) -> ControlState {
    let keep = reachable(s, kont, liveness);
    ControlState {
        code: s.code,
        fp: s.fp.clone(),
        store: s.store.restrict(|a| keep.contains(a)),
    }
}
