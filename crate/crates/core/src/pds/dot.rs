use std::fmt::Write;

use super::dsg::{Dsg, Node};
use super::StackAction;
use crate::ir::Program;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Node label: `stmt@fp-context`, or the throw site and exception classes
/// for the uncaught sink.
pub fn node_label(p: &Program, n: &Node) -> String {
    match n {
        Node::State(s) => format!("{}@{}", p.stmt_name(s.code), s.fp.display(p)),
        Node::Uncaught { throw, values } => {
            let classes: Vec<&str> = values.iter().map(|v| v.type_name(p)).collect();
            format!("uncaught {} {{{}}}", p.stmt_name(*throw), classes.join(","))
        }
    }
}

fn write_graph(out: &mut String, p: &Program, g: &Dsg, prefix: &str, indent: &str) {
    for (i, n) in g.nodes.iter().enumerate() {
        let shape = match n {
            Node::Uncaught { .. } => ", shape=box",
            Node::State(_) => "",
        };
        let _ = writeln!(
            out,
            "{indent}{prefix}n{i} [label=\"{}\"{shape}];",
            escape(&node_label(p, n))
        );
    }
    for &(from, a, to) in &g.edges {
        let label = match a {
            StackAction::Eps => "ε".to_string(),
            StackAction::Push(f) => format!("push:{}", g.frames[f as usize].display(p)),
            StackAction::Pop(f) => format!("pop:{}", g.frames[f as usize].display(p)),
        };
        let _ = writeln!(
            out,
            "{indent}{prefix}n{from} -> {prefix}n{to} [label=\"{}\"];",
            escape(&label)
        );
    }
    for &(from, to) in &g.summaries {
        let _ = writeln!(
            out,
            "{indent}{prefix}n{from} -> {prefix}n{to} [label=\"ε\", style=dashed];"
        );
    }
}

/// Renders `g` in DOT syntax. ε-summary edges are dashed.
pub fn emit_dot(p: &Program, g: &Dsg) -> String {
    let mut out = String::from("digraph dsg {\n  node [shape=ellipse];\n");
    write_graph(&mut out, p, g, "", "  ");
    out.push_str("}\n");
    out
}

/// Renders several graphs into one digraph, one cluster per named graph.
pub fn emit_dot_all(p: &Program, graphs: &[(String, &Dsg)]) -> String {
    if let [(_, g)] = graphs {
        return emit_dot(p, g);
    }
    let mut out = String::from("digraph dsg {\n  node [shape=ellipse];\n");
    for (i, (name, g)) in graphs.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{i} {{");
        let _ = writeln!(out, "    label=\"{}\";", escape(name));
        write_graph(&mut out, p, g, &format!("g{i}_"), "    ");
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}
