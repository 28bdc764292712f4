//! Plain-text graph format and dataset files.
//!
//! Text format: a header line `n d`, then `n` lines of `d` feature values,
//! then one `u v` line per edge. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::datasets::LabeledDataset;
use crate::error::GraphError;
use crate::graph::Graph;

fn parse_err(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        message: message.into(),
    }
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>, GraphError> {
    text.split_whitespace()
        .map(|tok| tok.parse().map_err(|_| parse_err(line, format!("bad number {tok:?}"))))
        .collect()
}

pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let head: Vec<usize> = numbers(hl, header)?;
    let [n, d] = head[..] else {
        return Err(parse_err(hl, "header must be `n d`"));
    };
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing feature lines"))?;
        let row: Vec<f64> = numbers(ln, l)?;
        if row.len() != d {
            return Err(parse_err(ln, format!("expected {d} features, found {}", row.len())));
        }
        features.extend(row);
    }
    let mut edges = Vec::new();
    for (ln, l) in lines {
        let e: Vec<usize> = numbers(ln, l)?;
        let [u, v] = e[..] else {
            return Err(parse_err(ln, "edge lines must be `u v`"));
        };
        edges.push((u, v));
    }
    Graph::new(n, &edges, features, d)
}

pub fn format_graph(g: &Graph) -> String {
    let mut out = format!("{} {}\n", g.node_count(), g.feature_dim());
    for v in 0..g.node_count() {
        let row: Vec<String> = g.features(v).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}").expect("writing to a string");
    }
    out
}

pub fn read_graph(path: &Path) -> Result<Graph, GraphError> {
    parse_graph(&fs::read_to_string(path)?)
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<(), GraphError> {
    Ok(fs::write(path, format_graph(g))?)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset, GraphError> {
    LabeledDataset::from_json(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset) -> Result<(), GraphError> {
    Ok(fs::write(path, ds.to_json()?)?)
}
