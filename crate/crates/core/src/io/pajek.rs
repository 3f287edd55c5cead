use std::fmt::Write;

use super::fmt_float;
use crate::citegraph::CitationGraph;

/// Pajek `.net` with 1-based vertex ids and `src dst weight` arc lines
/// sorted by (src, dst). Quotes inside labels are doubled.
pub fn write_pajek_arcs(labels: &[String], arcs: &[(usize, usize, f64)]) -> String {
    let mut out = String::new();
    writeln!(out, "*Vertices {}", labels.len()).unwrap();
    for (i, label) in labels.iter().enumerate() {
        writeln!(out, "{} \"{}\"", i + 1, label.replace('"', "\"\"")).unwrap();
    }
    out.push_str("*Arcs\n");
    let mut sorted = arcs.to_vec();
    sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (s, d, w) in sorted {
        writeln!(out, "{} {} {}", s + 1, d + 1, fmt_float(w)).unwrap();
    }
    out
}

/// Citation arcs (citing -> cited) with their stored weights.
pub fn write_pajek(graph: &CitationGraph, labels: &[String]) -> String {
    assert_eq!(labels.len(), graph.nodes.len(), "one label per node");
    let arcs: Vec<(usize, usize, f64)> = graph.arcs.iter().map(|a| (a.citing, a.cited, a.weight)).collect();
    write_pajek_arcs(labels, &arcs)
}
