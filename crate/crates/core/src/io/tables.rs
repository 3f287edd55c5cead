//! CSV writers. Every table has a header row, comma separators and
//! RFC 4180 quoting; floats go through [`fmt_float`].

use csv::WriterBuilder;

use super::fmt_float;
use crate::citegraph::{CitationGraph, CouplingGraph, MainPath, Partition, SpcWeights};
use crate::corpus::{CitationEdge, Profile, TopLayer};
use crate::disambig::VariantCluster;
use crate::error::Result;
use crate::rpys::{DeviationSeries, HeatmapMatrix, Spectrum, TopReference};

fn render<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn profile_csv(p: &Profile) -> Result<String> {
    render(&["year", "publications", "cited_refs", "local_citations"], |w| {
        for (y, pubs, refs, local) in p.rows() {
            w.write_record([y.to_string(), pubs.to_string(), refs.to_string(), local.to_string()])?;
        }
        Ok(())
    })
}

pub fn spectrum_csv(s: &Spectrum, d: &DeviationSeries) -> Result<String> {
    render(&["year", "count", "median5", "deviation"], |w| {
        for (i, y) in s.range.years().enumerate() {
            w.write_record([
                y.to_string(),
                s.counts[i].to_string(),
                fmt_float(d.medians[i]),
                fmt_float(d.deviations[i]),
            ])?;
        }
        Ok(())
    })
}

/// First column is the segment label, then one column per referenced year;
/// cells carry 6 decimals and absent cells are empty.
pub fn heatmap_csv(h: &HeatmapMatrix) -> Result<String> {
    let mut header = vec!["segment".to_string()];
    header.extend(h.rpy_axis.years().map(|y| y.to_string()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    render(&header_refs, |w| {
        for (s, row) in h.segments.iter().zip(&h.cells) {
            let mut rec = vec![s.label.clone()];
            rec.extend(row.iter().map(|c| c.map(|v| format!("{v:.6}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn top_referenced_csv(rows: &[TopReference]) -> Result<String> {
    render(&["reference", "count"], |w| {
        for r in rows {
            w.write_record([r.reference.clone(), r.count.to_string()])?;
        }
        Ok(())
    })
}

pub fn top_layer_csv(t: &TopLayer) -> Result<String> {
    render(&["rank", "id", "label", "lcs", "gcs"], |w| {
        for (i, r) in t.rows.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.id.clone(), r.label.clone(), r.lcs.to_string(), r.gcs.to_string()])?;
        }
        Ok(())
    })
}

pub fn edges_csv(edges: &[CitationEdge]) -> Result<String> {
    render(&["citing", "cited", "via"], |w| {
        for e in edges {
            w.write_record([e.citing.as_str(), e.cited.as_str(), e.via_raw.as_str()])?;
        }
        Ok(())
    })
}

pub fn partition_csv(g: &CitationGraph, p: &Partition) -> Result<String> {
    render(&["node_id", "community"], |w| {
        for (n, c) in g.nodes.iter().zip(&p.assignment) {
            w.write_record([n.id.clone(), c.to_string()])?;
        }
        Ok(())
    })
}

/// One row per path node; `spc` is the weight of the arc entering the node.
pub fn main_path_csv(g: &CitationGraph, paths: &[MainPath]) -> Result<String> {
    render(&["path", "step", "node_id", "pub_year", "spc"], |w| {
        for (pi, p) in paths.iter().enumerate() {
            for (step, &n) in p.nodes.iter().enumerate() {
                let spc = step.checked_sub(1).map(|i| p.arcs[i].spc.to_string()).unwrap_or_default();
                w.write_record([
                    (pi + 1).to_string(),
                    (step + 1).to_string(),
                    g.nodes[n].id.clone(),
                    g.nodes[n].year.map(|y| y.to_string()).unwrap_or_default(),
                    spc,
                ])?;
            }
        }
        Ok(())
    })
}

pub fn spc_csv(g: &CitationGraph, s: &SpcWeights) -> Result<String> {
    render(&["cited", "citing", "spc"], |w| {
        for a in &s.arcs {
            w.write_record([g.nodes[a.from].id.clone(), g.nodes[a.to].id.clone(), a.spc.to_string()])?;
        }
        Ok(())
    })
}

pub fn coupling_csv(c: &CouplingGraph) -> Result<String> {
    render(&["a", "b", "shared", "cosine"], |w| {
        for e in &c.edges {
            w.write_record([
                c.entities[e.a].clone(),
                c.entities[e.b].clone(),
                e.shared.to_string(),
                fmt_float(e.cosine),
            ])?;
        }
        Ok(())
    })
}

pub fn clusters_csv(clusters: &[VariantCluster]) -> Result<String> {
    render(&["cluster_id", "status", "total", "variants", "canonical"], |w| {
        for c in clusters {
            w.write_record([
                c.cluster_id.clone(),
                c.status.to_string(),
                c.total().to_string(),
                c.members.len().to_string(),
                c.canonical.clone(),
            ])?;
        }
        Ok(())
    })
}
