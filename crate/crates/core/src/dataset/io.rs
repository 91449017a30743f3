//! Directory layout:
//!
//! ```text
//! meta.json            {"num_nodes": N, "feature_dim": d, "relations": [names]}
//! features.csv         node_id,f_1,...,f_d        (one row per node)
//! labels.csv           node_id,label
//! rel_<name>.edges     u<TAB>v                    (one edge per line)
//! ```
//!
//! The writer emits rows sorted by node id and canonical edges (`u < v`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::{MultiRelationGraph, Relation};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const EDGE_FILE_PREFIX: &str = "rel_";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    feature_dim: usize,
    relations: Vec<String>,
}

fn edge_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{EDGE_FILE_PREFIX}{name}.edges"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_node(path: &Path, line: usize, field: &str, n: usize) -> Result<usize> {
    let id: usize = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("node id {field:?} is not a non-negative integer")))?;
    if id >= n {
        return Err(parse_err(path, line, format!("node id {id} is out of range for {n} nodes")));
    }
    Ok(id)
}

/// Non-empty lines with 1-based line numbers; a leading header row whose
/// first field is `node_id` is skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .filter(|(i, l)| !(*i == 1 && l.trim_start().starts_with("node_id")))
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<MultiRelationGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;
    let d = meta.feature_dim;

    let feat_path = dir.join(FEATURES_FILE);
    let text = read(&feat_path)?;
    let mut features = vec![0.0; n * d];
    let mut seen = vec![false; n];
    for (line, row) in data_lines(&text) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != d + 1 {
            return Err(parse_err(
                &feat_path,
                line,
                format!("expected {} fields, found {}", d + 1, fields.len()),
            ));
        }
        let id = parse_node(&feat_path, line, fields[0], n)?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(parse_err(&feat_path, line, format!("duplicate row for node {id}")));
        }
        for (c, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(&feat_path, line, format!("feature {f:?} is not numeric")))?;
            if !v.is_finite() {
                return Err(parse_err(&feat_path, line, format!("feature {f:?} is not finite")));
            }
            features[id * d + c] = v;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(parse_err(&feat_path, 0, format!("no feature row for node {missing}")));
    }

    let label_path = dir.join(LABELS_FILE);
    let text = read(&label_path)?;
    let mut labels = vec![0u8; n];
    let mut seen = vec![false; n];
    for (line, row) in data_lines(&text) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(&label_path, line, format!("expected 2 fields, found {}", fields.len())));
        }
        let id = parse_node(&label_path, line, fields[0], n)?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(parse_err(&label_path, line, format!("duplicate label for node {id}")));
        }
        labels[id] = match fields[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(&label_path, line, format!("label {other:?} is not 0 or 1"))),
        };
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(parse_err(&label_path, 0, format!("no label for node {missing}")));
    }

    let mut relations = Vec::with_capacity(meta.relations.len());
    for name in &meta.relations {
        let path = edge_file(dir, name);
        let text = read(&path)?;
        let mut pairs = Vec::new();
        for (line, row) in data_lines(&text) {
            let mut fields = row.split(['\t', ' ']).filter(|f| !f.is_empty());
            let (Some(u), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(&path, line, "expected two node ids"));
            };
            let u = parse_node(&path, line, u, n)?;
            let v = parse_node(&path, line, v, n)?;
            if u == v {
                return Err(parse_err(&path, line, format!("self-loop on node {u}")));
            }
            pairs.push((u, v));
        }
        relations.push(Relation::from_pairs(name.clone(), pairs));
    }

    let features = Tensor::matrix(n, d, features)?;
    MultiRelationGraph::new(features, labels, relations)
}

pub fn save_graph(graph: &MultiRelationGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |path: PathBuf, body: String| fs::write(&path, body).map_err(|e| Error::io(&path, e));

    let meta = Meta {
        num_nodes: graph.num_nodes(),
        feature_dim: graph.feature_dim(),
        relations: graph.relation_names(),
    };
    write(
        dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
    )?;

    let mut body = String::new();
    for v in 0..graph.num_nodes() {
        write!(body, "{v}").unwrap();
        for x in graph.features().row(v) {
            write!(body, ",{x}").unwrap();
        }
        body.push('\n');
    }
    write(dir.join(FEATURES_FILE), body)?;

    let mut body = String::new();
    for (v, l) in graph.labels().iter().enumerate() {
        writeln!(body, "{v},{l}").unwrap();
    }
    write(dir.join(LABELS_FILE), body)?;

    for rel in graph.relations() {
        let mut body = String::with_capacity(rel.edges.len() * 10);
        for (u, v) in &rel.edges {
            writeln!(body, "{u}\t{v}").unwrap();
        }
        write(edge_file(dir, &rel.name), body)?;
    }
    Ok(())
}
