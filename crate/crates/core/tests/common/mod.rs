//! Fixtures and independent checkers shared by the integration tests. Each
//! `check_*` returns `Err` with a readable reason instead of panicking so
//! the acceptance report can print every outcome.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use pdexflow::absint::{abs_step, alpha, AAction, AAddr, AFrame, AStore, AVal, Abstraction, Context, ControlState, Policy, Target};
use pdexflow::agc::{gc, live_registers, Liveness};
use pdexflow::analysis::{emit_json, run_analysis, AnalysisConfig};
use pdexflow::concrete::{evaluate, Terminal};
use pdexflow::ir::{parse_program, AExp, ClassId, FieldId, MethodId, Program, Reg, Stmt, StmtId};
use pdexflow::pds::{
    balanced_reach, dsg_oracle, emit_dot, net, pds_oracle, stackify, synthesize_dsg, Dsg, DsgConfig, Node,
    StackAction,
};

pub const FUEL: usize = 10_000;
pub const DEPTH: usize = 16;
pub const POLICIES: [Policy; 3] = [Policy::ZeroCfa, Policy::OneCfa, Policy::KCfa(2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Gc,
    Lra,
    Widen,
}

pub const MODES: [Mode; 3] = [Mode::Plain, Mode::Gc, Mode::Lra];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn read(rel: &str) -> String {
    fs::read_to_string(fixture_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn load(rel: &str) -> Program {
    parse_program(&read(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// `(name, program)` for every `.sexp` file directly under `dir`, sorted.
pub fn load_dir(dir: &str) -> Vec<(String, Program)> {
    let mut names: Vec<String> = fs::read_dir(fixture_dir().join(dir))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".sexp"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let rel = format!("{dir}/{n}");
            let p = load(&rel);
            (rel, p)
        })
        .collect()
}

pub fn sound_fixtures() -> Vec<(String, Program)> {
    load_dir("sound")
}

/// Every analyzable fixture.
pub fn all_fixtures() -> Vec<(String, Program)> {
    let mut all = sound_fixtures();
    all.extend(load_dir("cases"));
    all.extend(load_dir("gc"));
    for rel in ["intro.sexp", "poly.sexp"] {
        all.push((rel.to_string(), load(rel)));
    }
    all
}

pub fn main_of(p: &Program) -> MethodId {
    p.find_method("Main.main").expect("fixtures define Main.main")
}

pub fn dsg_config(policy: Policy, mode: Mode) -> DsgConfig {
    DsgConfig {
        policy,
        gc: matches!(mode, Mode::Gc | Mode::Lra),
        lra: mode == Mode::Lra,
        widen_store: mode == Mode::Widen,
        ..DsgConfig::default()
    }
}

pub fn dsg(p: &Program, policy: Policy, mode: Mode) -> Dsg {
    synthesize_dsg(p, main_of(p), dsg_config(policy, mode)).unwrap()
}

fn collect<T>(results: impl IntoIterator<Item = Result<T, String>>) -> Result<Vec<T>, String> {
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errs.push(e),
        }
    }
    if errs.is_empty() {
        Ok(ok)
    } else {
        Err(errs.join("\n"))
    }
}

// ---------------------------------------------------------------------------
// Soundness

/// Every concrete configuration of a bounded run, abstracted, must be a DSG
/// state whose store covers it and which is reachable with the abstracted
/// stack. Returns the number of configurations checked.
pub fn check_soundness(name: &str, p: &Program, policy: Policy, mode: Mode) -> Result<usize, String> {
    let run = evaluate(p, main_of(p), FUEL);
    let g = dsg(p, policy, mode);
    if g.incomplete {
        return Err(format!("{name} [{policy} {mode:?}]: graph incomplete"));
    }
    let reach = dsg_oracle(&g, DEPTH);
    let a = Abstraction {
        policy,
        history: &run.history,
    };
    let live = (mode == Mode::Lra).then(|| Liveness::for_program(p));
    let mut by_point: BTreeMap<(StmtId, &Context), Vec<u32>> = BTreeMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if let Node::State(q) = n {
            by_point.entry((q.code, &q.fp)).or_default().push(i as u32);
        }
    }
    for (step, c) in run.configs.iter().enumerate() {
        let (s, stack) = alpha(&a, c);
        let fail = |why: &str| {
            Err(format!(
                "{name} [{policy} {mode:?}] step {step} at {}: {why}",
                p.stmt_name(s.code)
            ))
        };
        if stack.len() > DEPTH {
            return fail("concrete stack deeper than the oracle bound");
        }
        let want: AStore = match (mode, &live) {
            (Mode::Gc, _) => gc(&s, stack.iter(), None).store,
            (Mode::Lra, Some(live)) => collect_live(&s, &stack, live),
            _ => s.store.clone(),
        };
        let Some(frames) = stack.iter().map(|f| g.frame_id(f)).collect::<Option<Vec<_>>>() else {
            return fail("a stack frame is missing from the graph's alphabet");
        };
        let candidates = by_point.get(&(s.code, &s.fp)).map(Vec::as_slice).unwrap_or(&[]);
        if candidates.is_empty() {
            return fail("no graph state at this statement and frame pointer");
        }
        let covered: Vec<u32> = candidates
            .iter()
            .copied()
            .filter(|&n| want.leq(g.store_of(n).unwrap()))
            .collect();
        if covered.is_empty() {
            return fail("no graph state's store covers the abstracted store");
        }
        if !covered.iter().any(|&n| reach.contains(&(n, frames.clone()))) {
            return fail("covering states are not reachable with the abstracted stack");
        }
    }
    if let Some(Terminal::Uncaught(v)) = &run.terminal {
        let last = run.configs.last().unwrap();
        let av = pdexflow::absint::alpha_val(&a, v);
        let found = g.nodes.iter().any(|n| {
            matches!(n, Node::Uncaught { throw, values } if *throw == last.code && values.contains(&av))
        });
        if !found {
            return Err(format!("{name} [{policy} {mode:?}]: uncaught exception has no sink"));
        }
    }
    Ok(run.configs.len())
}

/// What a program can still read from `s`: registers live at the current
/// statement and, for each call frame, registers live where it resumes,
/// closed under field reachability.
pub fn collect_live(s: &ControlState, stack: &[AFrame], live: &Liveness) -> AStore {
    let mut keep: BTreeSet<AAddr> = BTreeSet::new();
    let mut root = |fp: &Context, at: StmtId| {
        for a in s.store.regs_of(fp) {
            if matches!(a, AAddr::Reg(_, r) if live.is_live(at, *r)) {
                keep.insert(a.clone());
            }
        }
    };
    root(&s.fp, s.code);
    for f in stack {
        if let AFrame::Fun { fp, resume } = f {
            root(fp, *resume);
        }
    }
    let mut work: Vec<AAddr> = keep.iter().cloned().collect();
    while let Some(a) = work.pop() {
        for v in s.store.get(&a).into_iter().flatten() {
            if let AVal::Obj(op, _) = v {
                for b in s.store.fields_of(op) {
                    if keep.insert(b.clone()) {
                        work.push(b.clone());
                    }
                }
            }
        }
    }
    s.store.restrict(|a| keep.contains(a))
}

pub fn check_soundness_suite(modes: &[Mode]) -> Result<usize, String> {
    let fixtures = sound_fixtures();
    if fixtures.len() < 12 {
        return Err(format!("only {} soundness fixtures", fixtures.len()));
    }
    let mut jobs = Vec::new();
    for (name, p) in &fixtures {
        for policy in POLICIES {
            for &mode in modes {
                jobs.push(check_soundness(name, p, policy, mode));
            }
        }
    }
    Ok(collect(jobs)?.into_iter().sum())
}

// ---------------------------------------------------------------------------
// DSG against the explicit-stack search

pub fn check_oracle_equivalence(name: &str, p: &Program, policy: Policy) -> Result<(), String> {
    let tag = format!("{name} [{policy}]");
    let g = dsg(p, policy, Mode::Plain);
    let o = pds_oracle(p, main_of(p), policy, DEPTH);
    let graph_nodes: BTreeSet<Node> = g.nodes.iter().cloned().collect();
    if o.truncated {
        // Stacks grow without bound; the bounded search can only confirm
        // what it reaches.
        if !o.nodes.is_subset(&graph_nodes) {
            return Err(format!("{tag}: the search reached states the graph lacks"));
        }
    } else if o.nodes != graph_nodes {
        return Err(format!(
            "{tag}: node sets differ ({} in graph, {} by search)",
            graph_nodes.len(),
            o.nodes.len()
        ));
    }

    // Completeness of the ε relation: anything reachable over a net-empty
    // path from a realizable configuration is in the node's closure.
    let mut bases: BTreeMap<&Node, Vec<&Vec<AFrame>>> = BTreeMap::new();
    for (n, stack) in &o.configs {
        bases.entry(n).or_default().push(stack);
    }
    for (i, n) in g.nodes.iter().enumerate() {
        let closure: BTreeSet<&Node> = g.eps_closure[i].iter().map(|&v| &g.nodes[v as usize]).collect();
        for base in bases.get(n).into_iter().flatten() {
            for m in balanced_reach(p, policy, n, base, DEPTH) {
                if &m != n && !closure.contains(&m) {
                    return Err(format!(
                        "{tag}: graph misses a net-empty path {} -> {}",
                        p.stmt_name(n.code()),
                        p.stmt_name(m.code())
                    ));
                }
            }
        }
    }

    let want = summary_pairs(p, policy, &o.configs);
    let got: BTreeSet<(Node, Node)> = g
        .summaries
        .iter()
        .map(|&(u, v)| (g.nodes[u as usize].clone(), g.nodes[v as usize].clone()))
        .collect();
    let ok = if o.truncated { want.is_subset(&got) } else { want == got };
    if !ok {
        return Err(format!(
            "{tag}: summary edges differ ({} in graph, {} by search)",
            got.len(),
            want.len()
        ));
    }
    Ok(())
}

/// Pairs `(u, r)` joined by a push out of `u`, a path that never drops
/// below the pushed frame, and the pop of that frame into `r`. Searched
/// from every configuration of the bounded exploration.
pub fn summary_pairs(
    p: &Program,
    policy: Policy,
    configs: &BTreeSet<(Node, Vec<AFrame>)>,
) -> BTreeSet<(Node, Node)> {
    // The search never looks beneath the pushed frame, so only the
    // shallowest stack at each node matters.
    let mut depth: BTreeMap<&Node, (usize, Option<&AFrame>)> = BTreeMap::new();
    for (n, stack) in configs {
        let e = depth.entry(n).or_insert((stack.len(), stack.last()));
        if stack.len() < e.0 {
            *e = (stack.len(), stack.last());
        }
    }
    let step = |n: &Node, top: Option<&AFrame>| -> Vec<(AAction, Node)> {
        let Node::State(s) = n else { return Vec::new() };
        abs_step(p, policy, s, top)
            .transitions
            .into_iter()
            .map(|t| {
                let m = match t.target {
                    Target::State(s) => Node::State(s),
                    Target::Uncaught { throw, values } => Node::Uncaught { throw, values },
                };
                (t.action, m)
            })
            .collect()
    };
    let mut out = BTreeSet::new();
    for (&u, &(below, top)) in &depth {
        for (a, x) in step(u, top) {
            let AAction::Push(f) = a else { continue };
            if below >= DEPTH {
                continue;
            }
            let start = (x, vec![f]);
            let mut seen = BTreeSet::from([start.clone()]);
            let mut work = vec![start];
            while let Some((n, local)) = work.pop() {
                for (a, m) in step(&n, local.last()) {
                    let mut local = local.clone();
                    match a {
                        AAction::Eps => {}
                        AAction::Push(g) => {
                            if below + local.len() >= DEPTH {
                                continue;
                            }
                            local.push(g);
                        }
                        AAction::Pop(_) => {
                            local.pop();
                        }
                    }
                    if local.is_empty() {
                        out.insert((u.clone(), m));
                    } else if seen.insert((m.clone(), local.clone())) {
                        work.push((m, local));
                    }
                }
            }
        }
    }
    out
}

pub fn check_oracle_suite() -> Result<usize, String> {
    let mut jobs = Vec::new();
    for (name, p) in all_fixtures() {
        for policy in POLICIES {
            jobs.push(check_oracle_equivalence(&name, &p, policy));
        }
    }
    Ok(collect(jobs)?.len())
}

// ---------------------------------------------------------------------------
// Exception edge structure

/// A graph rendered as statement names: edges `(from, action, to)` with
/// actions `eps`, `push:fun`, `push:handle`, `pop:fun`, `pop:handle`, and
/// summaries `(from, to)`. The uncaught sink is `uncaught`.
pub type Shape = (BTreeSet<(String, String, String)>, BTreeSet<(String, String)>);

pub fn shape(p: &Program, g: &Dsg) -> Shape {
    let name = |n: u32| match &g.nodes[n as usize] {
        Node::State(s) => p.stmt_name(s.code),
        Node::Uncaught { .. } => "uncaught".to_string(),
    };
    let kind = |f: u32| match g.frames[f as usize] {
        AFrame::Fun { .. } => "fun",
        AFrame::Handle { .. } => "handle",
    };
    let edges = g
        .edges
        .iter()
        .map(|&(u, a, v)| {
            let a = match a {
                StackAction::Eps => "eps".to_string(),
                StackAction::Push(f) => format!("push:{}", kind(f)),
                StackAction::Pop(f) => format!("pop:{}", kind(f)),
            };
            (name(u), a, name(v))
        })
        .collect();
    let summaries = g.summaries.iter().map(|&(u, v)| (name(u), name(v))).collect();
    (edges, summaries)
}

fn edges(list: &[(&str, &str, &str)]) -> BTreeSet<(String, String, String)> {
    list.iter()
        .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
        .collect()
}

fn pairs(list: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// The expected structure of each exception edge case, by fixture.
pub fn expected_cases() -> Vec<(&'static str, Shape)> {
    vec![
        (
            "cases/handler_push_pop.sexp",
            (
                edges(&[
                    ("Main.main:0", "push:handle", "Main.main:1"),
                    ("Main.main:1", "eps", "Main.main:2"),
                    ("Main.main:2", "pop:handle", "Main.main:3"),
                ]),
                pairs(&[("Main.main:0", "Main.main:3")]),
            ),
        ),
        (
            "cases/locally_caught.sexp",
            (
                edges(&[
                    ("Main.main:0", "push:fun", "Main.f:0"),
                    ("Main.f:0", "push:handle", "Main.f:1"),
                    ("Main.f:1", "eps", "Main.f:2"),
                    ("Main.f:2", "pop:handle", "Main.f:3"),
                    ("Main.f:3", "eps", "Main.f:4"),
                    ("Main.f:4", "pop:fun", "Main.main:1"),
                ]),
                pairs(&[("Main.f:0", "Main.f:3"), ("Main.main:0", "Main.main:1")]),
            ),
        ),
        (
            "cases/propagation.sexp",
            (
                edges(&[
                    ("Main.main:0", "push:handle", "Main.main:1"),
                    ("Main.main:1", "push:fun", "Main.f:0"),
                    ("Main.f:0", "eps", "Main.f:1"),
                    ("Main.f:1", "pop:fun", "Main.f:1"),
                    ("Main.f:1", "pop:handle", "Main.main:4"),
                    ("Main.main:4", "eps", "Main.main:5"),
                ]),
                pairs(&[("Main.main:1", "Main.f:1"), ("Main.main:0", "Main.main:4")]),
            ),
        ),
        (
            "cases/return_under_handler.sexp",
            (
                edges(&[
                    ("Main.main:0", "push:fun", "Main.f:0"),
                    ("Main.f:0", "push:handle", "Main.f:1"),
                    ("Main.f:1", "pop:handle", "Main.f:1"),
                    ("Main.f:1", "pop:fun", "Main.main:1"),
                ]),
                pairs(&[("Main.f:0", "Main.f:1"), ("Main.main:0", "Main.main:1")]),
            ),
        ),
        (
            "cases/uncaught.sexp",
            (
                edges(&[
                    ("Main.main:0", "push:fun", "Main.f:0"),
                    ("Main.f:0", "eps", "Main.f:1"),
                    ("Main.f:1", "pop:fun", "Main.f:1"),
                    ("Main.f:1", "eps", "uncaught"),
                ]),
                pairs(&[("Main.main:0", "Main.f:1")]),
            ),
        ),
    ]
}

pub fn check_case(rel: &str, want: &Shape) -> Result<(), String> {
    let p = load(rel);
    let got = shape(&p, &dsg(&p, Policy::ZeroCfa, Mode::Plain));
    if &got != want {
        return Err(format!("{rel}: structure differs\n  got  {got:?}\n  want {want:?}"));
    }
    Ok(())
}

pub fn check_cases() -> Result<usize, String> {
    Ok(collect(expected_cases().iter().map(|(rel, want)| check_case(rel, want)))?.len())
}

// ---------------------------------------------------------------------------
// Intro example

pub fn check_intro() -> Result<(), String> {
    let p = load("intro.sexp");
    let report = run_analysis(&p, &AnalysisConfig::default())
        .map_err(|e| e.to_string())?
        .report;
    let links: Vec<(String, String)> = report
        .ec_links
        .pairs
        .iter()
        .map(|l| (l.throw.clone(), l.handler.clone()))
        .collect();
    let want = vec![("Main.maybeThrow:1".to_string(), "Main.main:4".to_string())];
    if report.ec_links.count != 1 || links != want {
        return Err(format!("expected one link {want:?}, got {links:?}"));
    }
    let uncaught: Vec<(String, Vec<String>)> =
        report.uncaught.iter().map(|u| (u.throw.clone(), u.types.clone())).collect();
    if uncaught != [("Main.maybeThrow:1".to_string(), vec!["Exception".to_string()])] {
        return Err(format!("unexpected uncaught list {uncaught:?}"));
    }
    // The call-2 exception must not reach the handler on any stack the
    // explicit search realizes: every configuration at the handler came
    // through a stack that held the call-1 frame.
    let o = pds_oracle(&p, main_of(&p), Policy::ZeroCfa, DEPTH);
    let calls: Vec<StmtId> = p
        .method(main_of(&p))
        .body()
        .filter(|&s| matches!(p.stmt(s), Stmt::Invoke(_)))
        .collect();
    let call2_resume = StmtId(calls[1].0 + 1);
    let mut call2_throws = 0;
    for (n, stack) in &o.configs {
        let at_throw = n.state().is_some_and(|s| p.stmt_name(s.code) == "Main.maybeThrow:1");
        let from_call2 = matches!(stack.as_slice(), [AFrame::Fun { resume, .. }] if *resume == call2_resume);
        if at_throw && from_call2 {
            call2_throws += 1;
            let reach = balanced_reach(&p, Policy::ZeroCfa, n, &[], DEPTH);
            if reach.iter().any(|m| m.state().is_some_and(|s| p.stmt_name(s.code) == "Main.main:4")) {
                return Err("call 2's exception reaches handler 1".into());
            }
        }
    }
    if call2_throws == 0 {
        return Err("the explicit search never throws from call 2".into());
    }
    // And concretely: handler 1 runs once, then the second exception escapes.
    let run = evaluate(&p, main_of(&p), FUEL);
    let handler_visits = run
        .configs
        .iter()
        .filter(|c| p.stmt_name(c.code) == "Main.main:4")
        .count();
    if handler_visits != 1 || !matches!(run.terminal, Some(Terminal::Uncaught(_))) {
        return Err(format!(
            "concrete run visited the handler {handler_visits} times, ended {:?}",
            run.terminal
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stack-action algebra

pub fn action_string() -> impl Strategy<Value = Vec<StackAction<u8>>> {
    let action = prop_oneof![
        Just(StackAction::Eps),
        (0u8..4).prop_map(StackAction::Push),
        (0u8..4).prop_map(StackAction::Pop),
    ];
    prop::collection::vec(action, 0..=32)
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn check_stack_algebra(cases: u32) -> Result<(), String> {
    let mut r = runner(cases);
    r.run(&action_string(), |g| {
        let n = net(&g);
        prop_assert_eq!(net(&n), n.clone());
        prop_assert!(n.len() <= g.len());
        let push_only = n.iter().all(|a| matches!(a, StackAction::Push(_)));
        prop_assert_eq!(stackify(&g).is_some(), push_only);
        Ok(())
    })
    .map_err(|e| format!("net/stackify: {e}"))?;
    let mut r = runner(cases);
    r.run(&(action_string(), action_string(), 0u8..4), |(a, b, f)| {
        let mut with = a.clone();
        with.push(StackAction::Push(f));
        with.push(StackAction::Pop(f));
        with.extend(b.iter().copied());
        let mut without = a.clone();
        without.extend(b.iter().copied());
        prop_assert_eq!(stackify(&with), stackify(&without));
        Ok(())
    })
    .map_err(|e| format!("push/pop cancellation: {e}"))
}

// ---------------------------------------------------------------------------
// Garbage collection

fn context() -> impl Strategy<Value = Context> {
    (0u32..4, prop::collection::vec(0u32..3, 0..2)).prop_map(|(s, h)| Context {
        site: StmtId(s),
        history: h.into_iter().map(StmtId).collect(),
    })
}

fn value() -> impl Strategy<Value = AVal> {
    prop_oneof![
        Just(AVal::Int),
        Just(AVal::Null),
        Just(AVal::Str),
        (context(), 0u32..3).prop_map(|(c, k)| AVal::Obj(c, ClassId(k))),
    ]
}

fn addr() -> impl Strategy<Value = AAddr> {
    prop_oneof![
        (context(), 0u32..4).prop_map(|(c, r)| AAddr::Reg(c, Reg::V(r))),
        (context(), 0u32..3).prop_map(|(c, f)| AAddr::Field(c, FieldId(f))),
    ]
}

fn frame() -> impl Strategy<Value = AFrame> {
    prop_oneof![
        (context(), 0u32..4).prop_map(|(fp, r)| AFrame::Fun {
            fp,
            resume: StmtId(r)
        }),
        (0u32..3, 0u32..4).prop_map(|(c, l)| AFrame::Handle {
            class: ClassId(c),
            label: StmtId(l)
        }),
    ]
}

/// Random configurations with a store and a stack.
pub fn config() -> impl Strategy<Value = (ControlState, Vec<AFrame>)> {
    let store = prop::collection::vec((addr(), prop::collection::btree_set(value(), 1..3)), 0..12)
        .prop_map(|binds| {
            let mut s = AStore::new();
            for (a, vs) in binds {
                s.join(a, vs);
            }
            s
        });
    (0u32..4, context(), store, prop::collection::vec(frame(), 0..4)).prop_map(|(code, fp, store, kont)| {
        (
            ControlState {
                code: StmtId(code),
                fp,
                store,
            },
            kont,
        )
    })
}

pub fn check_gc_idempotence(cases: u32) -> Result<(), String> {
    // Liveness over a program whose statements 0..4 read only v1.
    let p = parse_program(
        "(class Main extends Object () ((method main () void (throws) (limit 4)
           (assign v0 v1) (assign v0 v1) (assign v0 v1) (return v1))))",
    )
    .unwrap();
    let live = Liveness::for_program(&p);
    let mut r = runner(cases);
    r.run(&config(), |(s, kont)| {
        for l in [None, Some(&live)] {
            let once = gc(&s, kont.iter(), l);
            let twice = gc(&once, kont.iter(), l);
            prop_assert_eq!(&twice, &once);
            prop_assert!(once.store.leq(&s.store));
            for (a, v) in once.store.iter() {
                prop_assert_eq!(s.store.get(a), Some(v));
            }
            if l.is_none() {
                for a in s.store.regs_of(&s.fp) {
                    prop_assert!(once.store.contains(a), "current-frame register dropped");
                }
            }
        }
        Ok(())
    })
    .map_err(|e| format!("gc idempotence: {e}"))?;

    // The same on every state the fixtures actually reach.
    for (name, p) in all_fixtures() {
        for mode in [Mode::Plain, Mode::Gc] {
            let g = dsg(&p, Policy::ZeroCfa, mode);
            let all: Vec<&AFrame> = g.frames.iter().collect();
            for n in &g.nodes {
                if let Node::State(s) = n {
                    let once = gc(s, all.iter().copied(), None);
                    if gc(&once, all.iter().copied(), None) != once {
                        return Err(format!("{name}: gc not idempotent on a reachable state"));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Node counts of the dead-binding fixtures: plain, gc, gc with liveness.
pub fn gc_node_counts() -> Vec<(String, [usize; 3])> {
    load_dir("gc")
        .into_iter()
        .map(|(name, p)| {
            let counts = [Mode::Plain, Mode::Gc, Mode::Lra].map(|m| dsg(&p, Policy::ZeroCfa, m).nodes.len());
            (name, counts)
        })
        .collect()
}

pub fn check_gc_effect() -> Result<String, String> {
    let counts = gc_node_counts();
    let summary: Vec<String> = counts
        .iter()
        .map(|(n, [a, b, c])| format!("{}: {a}/{b}/{c}", n.trim_start_matches("gc/")))
        .collect();
    let summary = summary.join(", ");
    for (name, [plain, gc, lra]) in &counts {
        if !(gc < plain && lra <= gc) {
            return Err(format!("{name}: node counts {plain}/{gc}/{lra} are not decreasing"));
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Liveness by path enumeration

fn regs(e: &AExp, out: &mut BTreeSet<Reg>) {
    match e {
        AExp::Reg(r) => {
            out.insert(*r);
        }
        AExp::Op(_, args) => args.iter().for_each(|a| regs(a, out)),
        AExp::InstanceOf(a, _) => regs(a, out),
        _ => {}
    }
}

/// Reads and the write of a statement, spelled out independently of the
/// library's classification.
fn reads_writes(p: &Program, m: MethodId, s: StmtId) -> (BTreeSet<Reg>, Option<Reg>) {
    let mut r = BTreeSet::new();
    let w = match p.stmt(s) {
        Stmt::Assign { dst, src } => {
            regs(src, &mut r);
            Some(*dst)
        }
        Stmt::New { dst, .. } => Some(*dst),
        Stmt::FieldGet { dst, obj, .. } => {
            regs(obj, &mut r);
            Some(*dst)
        }
        Stmt::FieldPut { obj, value, .. } => {
            regs(obj, &mut r);
            regs(value, &mut r);
            None
        }
        Stmt::Invoke(call) => {
            for a in &call.args {
                regs(a, &mut r);
            }
            Some(Reg::Ret)
        }
        Stmt::If { cond, .. } => {
            regs(cond, &mut r);
            None
        }
        Stmt::Return(e) => {
            regs(e, &mut r);
            None
        }
        // A handler may run in this frame and read anything.
        Stmt::Throw(_) => {
            r.extend(p.method(m).all_registers());
            None
        }
        _ => None,
    };
    (r, w)
}

pub fn next_stmts(p: &Program, m: MethodId, s: StmtId) -> Vec<StmtId> {
    let def = p.method(m);
    let fall = (s.0 + 1 < def.first.0 + def.len).then(|| StmtId(s.0 + 1));
    match p.stmt(s) {
        Stmt::Goto(l) => vec![p.label_target(m, l).unwrap()],
        Stmt::If { target, .. } => fall.into_iter().chain(p.label_target(m, target)).collect(),
        Stmt::Return(_) | Stmt::Throw(_) => vec![],
        _ => fall.into_iter().collect(),
    }
}

/// `r` is live before `s` iff some simple path from `s` reaches a read of
/// `r` without first writing it. Any witness path can be shortened to a
/// simple one, so simple paths suffice.
pub fn brute_force_liveness(p: &Program, m: MethodId) -> BTreeMap<StmtId, BTreeSet<Reg>> {
    let def = p.method(m);
    let mut out = BTreeMap::new();
    for s in def.body() {
        let mut live: BTreeSet<Reg> = [Reg::Ret, Reg::Exn].into();
        for r in def.all_registers() {
            let mut path = vec![s];
            if reads_before_write(p, m, r, &mut path) {
                live.insert(r);
            }
        }
        out.insert(s, live);
    }
    out
}

fn reads_before_write(p: &Program, m: MethodId, r: Reg, path: &mut Vec<StmtId>) -> bool {
    let s = *path.last().unwrap();
    let (reads, write) = reads_writes(p, m, s);
    if reads.contains(&r) {
        return true;
    }
    if write == Some(r) {
        return false;
    }
    for t in next_stmts(p, m, s) {
        if path.contains(&t) {
            continue;
        }
        path.push(t);
        let hit = reads_before_write(p, m, r, path);
        path.pop();
        if hit {
            return true;
        }
    }
    false
}

pub fn check_liveness() -> Result<usize, String> {
    let mut methods = 0;
    for (name, p) in all_fixtures() {
        for m in p.method_ids() {
            if p.method(m).len > 20 {
                continue;
            }
            methods += 1;
            let got = live_registers(&p, m);
            let want = brute_force_liveness(&p, m);
            if got != want {
                return Err(format!("{name}: liveness of {} differs", p.method_name(m)));
            }
        }
    }
    Ok(methods)
}

// ---------------------------------------------------------------------------
// Determinism

pub fn analysis_config(policy: Policy, mode: Mode) -> AnalysisConfig {
    AnalysisConfig {
        policy,
        gc: matches!(mode, Mode::Gc | Mode::Lra),
        lra: mode == Mode::Lra,
        widen_store: mode == Mode::Widen,
        ..AnalysisConfig::default()
    }
}

/// JSON with the elapsed time zeroed, and DOT.
pub fn outputs(p: &Program, cfg: &AnalysisConfig) -> (String, String) {
    let mut a = run_analysis(p, cfg).unwrap();
    a.report.elapsed_seconds = 0.0;
    let dot: String = a.graphs.iter().map(|(_, g)| emit_dot(p, g)).collect();
    (emit_json(&a.report), dot)
}

pub fn check_determinism() -> Result<usize, String> {
    let mut runs = 0;
    for (name, _) in all_fixtures() {
        for policy in POLICIES {
            for mode in [Mode::Plain, Mode::Gc, Mode::Lra, Mode::Widen] {
                let cfg = analysis_config(policy, mode);
                // Parse afresh each time so nothing is shared between runs.
                let first = outputs(&load(&name), &cfg);
                let second = outputs(&load(&name), &cfg);
                if first != second {
                    return Err(format!("{name} [{policy} {mode:?}]: outputs differ between runs"));
                }
                runs += 1;
            }
        }
    }
    Ok(runs)
}

// ---------------------------------------------------------------------------
// Polyvariance

pub fn param_types(policy: Policy) -> BTreeMap<String, Vec<String>> {
    let p = load("poly.sexp");
    let cfg = AnalysisConfig {
        policy,
        ..AnalysisConfig::default()
    };
    let r = run_analysis(&p, &cfg).unwrap().report;
    r.var_points_to
        .details
        .into_iter()
        .filter(|d| d.key.starts_with("p0@Main.id:0"))
        .map(|d| (d.key, d.types))
        .collect()
}

pub fn check_polyvariance() -> Result<(), String> {
    let zero = param_types(Policy::ZeroCfa);
    let want0: BTreeMap<String, Vec<String>> =
        [("p0@Main.id:0".to_string(), vec!["A".to_string(), "B".to_string()])].into();
    if zero != want0 {
        return Err(format!("0cfa: {zero:?}"));
    }
    let one = param_types(Policy::OneCfa);
    let want1: BTreeMap<String, Vec<String>> = [
        ("p0@Main.id:0<Main.main:1>".to_string(), vec!["A".to_string()]),
        ("p0@Main.id:0<Main.main:3>".to_string(), vec!["B".to_string()]),
    ]
    .into();
    if one != want1 {
        return Err(format!("1cfa: {one:?}"));
    }
    Ok(())
}
