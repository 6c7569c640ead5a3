//! Graphviz export of a task graph.

use std::fmt::Write;

use crate::task::TaskId;

pub struct DotNode {
    pub id: TaskId,
    pub label: String,
    /// Speculative or disabled tasks are drawn dashed.
    pub dashed: bool,
}

fn escape(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Renders a digraph. Edges are emitted in the given order.
pub fn render(nodes: &[DotNode], edges: &[(TaskId, TaskId)]) -> String {
    let mut out = String::from("digraph G {\n");
    for n in nodes {
        let style = if n.dashed { ", style=dashed" } else { "" };
        let _ = writeln!(out, "    {} [label=\"{}\"{style}];", n.id, escape(&n.label));
    }
    for (a, b) in edges {
        let _ = writeln!(out, "    {a} -> {b};");
    }
    out.push_str("}\n");
    out
}
