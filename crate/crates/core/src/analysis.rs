//! Orchestration and precision metrics over synthesized graphs.
//!
//! * VarPointsTo: for every register address bound in some reachable store,
//!   the type names it may hold.
//! * ThrowPointsTo: for every reachable throw statement, the type names of
//!   the values it may throw.
//! * E-C links: (throw, handler) pairs matched while the graph was built.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::absint::{abs_atomic_eval, AAddr, Policy};
use crate::ir::{MethodId, Program, Reg, Stmt};
use crate::pds::{synthesize_dsg, Dsg, DsgConfig, DsgError, Node};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Entry methods as `Class.method`, analyzed one after another.
    pub entries: Vec<String>,
    pub policy: Policy,
    pub gc: bool,
    pub lra: bool,
    pub widen_store: bool,
    pub node_budget: usize,
    pub time_budget: Option<Duration>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            entries: vec!["Main.main".to_string()],
            policy: Policy::ZeroCfa,
            gc: false,
            lra: false,
            widen_store: false,
            node_budget: 1_000_000,
            time_budget: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("unknown entry method `{0}`")]
    UnknownEntry(String),
    #[error(transparent)]
    Dsg(#[from] DsgError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub entries: Vec<String>,
    pub policy: String,
    pub gc: bool,
    pub lra: bool,
    pub widen_store: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointsTo {
    pub key: String,
    pub types: Vec<String>,
}

/// A metric summarized as (entry count, mean set size) plus the sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub entries: usize,
    pub mean: f64,
    pub details: Vec<PointsTo>,
}

impl Metric {
    fn from_map(map: BTreeMap<String, BTreeSet<String>>) -> Self {
        let entries = map.len();
        let total: usize = map.values().map(BTreeSet::len).sum();
        let mean = if entries == 0 {
            0.0
        } else {
            // Rounded so the emitted text does not depend on float printing.
            (total as f64 / entries as f64 * 1e6).round() / 1e6
        };
        Metric {
            entries,
            mean,
            details: map
                .into_iter()
                .map(|(key, types)| PointsTo {
                    key,
                    types: types.into_iter().collect(),
                })
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.details.iter().find(|d| d.key == key).map(|d| d.types.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EcLink {
    pub throw: String,
    pub handler: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcLinks {
    pub count: usize,
    pub pairs: Vec<EcLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Uncaught {
    pub throw: String,
    pub types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub config: ConfigEcho,
    pub nodes: usize,
    pub edges: usize,
    pub summary_edges: usize,
    pub var_points_to: Metric,
    pub throw_points_to: Metric,
    pub ec_links: EcLinks,
    pub uncaught: Vec<Uncaught>,
    pub unresolved_calls: usize,
    pub incomplete: bool,
    pub elapsed_seconds: f64,
}

/// The graphs behind a report, kept for graph output.
pub struct Analysis {
    pub report: Report,
    pub graphs: Vec<(String, Dsg)>,
}

fn reg_key(p: &Program, a: &AAddr) -> Option<String> {
    match a {
        AAddr::Reg(ctx, r) => Some(format!("{}@{}", r, ctx.display(p))),
        AAddr::Field(..) => None,
    }
}

/// Synthesizes a graph for every entry of `cfg` and merges their metrics.
pub fn run_analysis(p: &Program, cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    let started = Instant::now();
    let entries: Vec<MethodId> = cfg
        .entries
        .iter()
        .map(|e| p.find_method(e).map_err(|_| AnalysisError::UnknownEntry(e.clone())))
        .collect::<Result<_, _>>()?;
    let dsg_cfg = DsgConfig {
        policy: cfg.policy,
        gc: cfg.gc || cfg.lra,
        lra: cfg.lra,
        widen_store: cfg.widen_store,
        node_budget: cfg.node_budget,
        time_budget: cfg.time_budget,
    };
    let mut graphs = Vec::new();
    for (name, &m) in cfg.entries.iter().zip(&entries) {
        graphs.push((name.clone(), synthesize_dsg(p, m, dsg_cfg)?));
    }

    let mut vars: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut throws: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut links = BTreeSet::new();
    let mut uncaught: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut unresolved = BTreeSet::new();
    let (mut nodes, mut edges, mut summaries, mut incomplete) = (0, 0, 0, false);
    for (_, g) in &graphs {
        nodes += g.nodes.len();
        edges += g.edges.len();
        summaries += g.summaries.len();
        incomplete |= g.incomplete;
        links.extend(g.ec_links.iter().map(|&(t, h)| EcLink {
            throw: p.stmt_name(t),
            handler: p.stmt_name(h),
        }));
        unresolved.extend(g.unresolved.iter().copied());
        for (i, n) in g.nodes.iter().enumerate() {
            match n {
                Node::State(s) => {
                    let store = g.store_of(i as u32).expect("state nodes carry a store");
                    for (a, vals) in store.iter() {
                        if let Some(key) = reg_key(p, a) {
                            vars.entry(key)
                                .or_default()
                                .extend(vals.iter().map(|v| v.type_name(p).to_string()));
                        }
                    }
                    if let Stmt::Throw(e) = p.stmt(s.code) {
                        throws
                            .entry(p.stmt_name(s.code))
                            .or_default()
                            .extend(abs_atomic_eval(p, e, &s.fp, store).iter().map(|v| v.type_name(p).to_string()));
                    }
                }
                Node::Uncaught { throw, values } => {
                    uncaught
                        .entry(p.stmt_name(*throw))
                        .or_default()
                        .extend(values.iter().map(|v| v.type_name(p).to_string()));
                }
            }
        }
    }
    let report = Report {
        schema: SCHEMA,
        config: ConfigEcho {
            entries: cfg.entries.clone(),
            policy: cfg.policy.to_string(),
            gc: cfg.gc || cfg.lra,
            lra: cfg.lra,
            widen_store: cfg.widen_store,
        },
        nodes,
        edges,
        summary_edges: summaries,
        var_points_to: Metric::from_map(vars),
        throw_points_to: Metric::from_map(throws),
        ec_links: EcLinks {
            count: links.len(),
            pairs: links.into_iter().collect(),
        },
        uncaught: uncaught
            .into_iter()
            .map(|(throw, types)| Uncaught {
                throw,
                types: types.into_iter().collect(),
            })
            .collect(),
        unresolved_calls: unresolved.len(),
        incomplete,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(Analysis { report, graphs })
}

/// Pretty JSON with a trailing newline. Field order is fixed by the
/// report's declaration order.
pub fn emit_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

/// The register key used in VarPointsTo details for register `r` under
/// a context rendered as `ctx`.
pub fn var_key(r: Reg, ctx: &str) -> String {
    format!("{r}@{ctx}")
}
