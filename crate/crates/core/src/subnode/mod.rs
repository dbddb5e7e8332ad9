//! Attribute-aware skip-gram ("Subnode") embeddings.
//!
//! A news node is rewritten as the bag of its features; its vector is the
//! sum of the feature vectors. Element nodes stand for their own
//! `elem:<token>` feature. Training predicts walk contexts from these sums
//! with negative sampling, and any article, seen or unseen, is embedded by
//! summing the vectors of whatever features it has.

mod objective;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use crate::corpus::Featurizer;
use crate::corpus::{Document, FeatureBag};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeKind};

pub use objective::{log_sigmoid, pair_gradient, pair_loss, sigmoid, PairGradient};
pub use train::{train, SubnodeModel, TrainConfig};

/// Walks rewritten over feature bags. Context ids are graph node indices;
/// `bags[node]` holds indices into `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub features: Vec<String>,
    pub nodes: Vec<String>,
    pub is_news: Vec<bool>,
    pub bags: Vec<Vec<usize>>,
    pub sequences: Vec<Vec<usize>>,
}

impl Decomposition {
    /// The rewritten form of one sequence: each position as its feature ids.
    pub fn rewritten(&self, seq: usize) -> Vec<Vec<&str>> {
        self.sequences[seq]
            .iter()
            .map(|&n| self.bags[n].iter().map(|&f| self.features[f].as_str()).collect())
            .collect()
    }
}

pub fn decompose(walks: &[Vec<usize>], graph: &AttributedGraph) -> Result<Decomposition> {
    let mut used = vec![false; graph.n_nodes()];
    for walk in walks {
        for &n in walk {
            used[n] = true;
        }
    }
    for (i, node) in graph.nodes().iter().enumerate() {
        if used[i] && node.kind == NodeKind::News && node.features.is_empty() {
            return Err(Error::EmptyFeatureBag(node.id.clone()));
        }
    }
    let vocab: BTreeSet<&str> = graph.nodes().iter().flat_map(|n| n.features.iter()).collect();
    let features: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let bags = graph
        .nodes()
        .iter()
        .map(|n| n.features.iter().map(|f| index[f]).collect())
        .collect();
    Ok(Decomposition {
        features,
        nodes: graph.nodes().iter().map(|n| n.id.clone()).collect(),
        is_news: graph.nodes().iter().map(|n| n.kind == NodeKind::News).collect(),
        bags,
        sequences: walks.to_vec(),
    })
}

/// Named dense vectors of a fixed dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(names: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != names.len() * dim {
            return Err(Error::Shape(format!(
                "{} names x {dim} dims needs {} values, got {}",
                names.len(),
                names.len() * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "embedding table",
                detail: format!("entry `{}` component {}", names[pos / dim.max(1)], pos % dim.max(1)),
            });
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::parse(n, "duplicate embedding entry"));
            }
        }
        Ok(EmbeddingTable {
            names,
            index,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Header `<vocab_size> <d>`, then `name v_1 … v_d` per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.names.len(), self.dim)?;
        for (i, name) in self.names.iter().enumerate() {
            write_row(&mut out, name, self.row(i))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("embedding", "missing header"))?
            .map_err(|e| Error::parse("embedding", e))?;
        let (count, dim) = parse_header(&header)?;
        let mut names = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::parse("embedding", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (name, values) = parse_row(&line, dim, lineno + 2)?;
            names.push(name);
            data.extend(values);
        }
        if names.len() != count {
            return Err(Error::parse(
                "embedding",
                format!("header says {count} rows, found {}", names.len()),
            ));
        }
        EmbeddingTable::new(names, dim, data)
    }

    /// word2vec binary layout: text header, then `name ` followed by `d`
    /// little-endian `f32` values and a newline per entry.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.names.len(), self.dim)?;
        for (i, name) in self.names.iter().enumerate() {
            out.write_all(name.as_bytes())?;
            out.write_all(b" ")?;
            for v in self.row(i) {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::parse("embedding", e))?;
        let bad = |m: &str| Error::parse("binary embedding", m.to_string());
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let (count, dim) = parse_header(header)?;
        let mut pos = nl + 1;
        let mut names = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let sp = bytes[pos..]
                .iter()
                .position(|&b| b == b' ')
                .ok_or_else(|| bad("truncated entry name"))?;
            names.push(String::from_utf8(bytes[pos..pos + sp].to_vec()).map_err(|_| bad("entry name is not UTF-8"))?);
            pos += sp + 1;
            let end = pos + 4 * dim;
            if bytes.len() < end {
                return Err(bad("truncated vector"));
            }
            for chunk in bytes[pos..end].chunks_exact(4) {
                data.push(f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]])));
            }
            pos = end;
            if bytes.get(pos) == Some(&b'\n') {
                pos += 1;
            }
        }
        EmbeddingTable::new(names, dim, data)
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let mut it = header.split_whitespace();
    let parse = |s: Option<&str>| -> Result<usize> {
        s.ok_or_else(|| Error::parse("embedding header", "expected `<count> <dim>`"))?
            .parse()
            .map_err(|e| Error::parse("embedding header", e))
    };
    Ok((parse(it.next())?, parse(it.next())?))
}

fn parse_row(line: &str, dim: usize, lineno: usize) -> Result<(String, Vec<f64>)> {
    let mut parts = line.split(' ');
    let name = parts.next().unwrap_or_default().to_string();
    let values = parts
        .map(|v| v.parse::<f64>().map_err(|e| Error::parse(format!("line {lineno}"), e)))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != dim {
        return Err(Error::parse(
            format!("line {lineno}"),
            format!("expected {dim} values, got {}", values.len()),
        ));
    }
    Ok((name, values))
}

fn write_row<W: Write>(out: &mut W, name: &str, values: &[f64]) -> std::io::Result<()> {
    out.write_all(name.as_bytes())?;
    for v in values {
        write!(out, " {v}")?;
    }
    out.write_all(b"\n")
}

/// News-vector export: `doc_id v_1 … v_d` per line, no header.
pub fn write_vectors<W: Write>(rows: &[(String, Vec<f64>)], mut out: W) -> std::io::Result<()> {
    for (id, v) in rows {
        write_row(&mut out, id, v)?;
    }
    Ok(())
}

pub fn read_vectors<R: BufRead>(input: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::parse("vectors", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d = *dim.get_or_insert_with(|| line.split(' ').count() - 1);
        rows.push(parse_row(&line, d, lineno + 1)?);
    }
    Ok(rows)
}

/// Unweighted sum of the bag's feature vectors in sorted feature order.
/// Returns the vector and the number of out-of-vocabulary features skipped.
pub fn embed_news(bag: &FeatureBag, table: &EmbeddingTable) -> Result<(Vec<f64>, usize)> {
    let mut sum = vec![0.0; table.dim()];
    let mut skipped = 0;
    for feature in bag.iter() {
        match table.get(feature) {
            Some(v) => {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            None => skipped += 1,
        }
    }
    if skipped == bag.len() {
        return Err(Error::AllOutOfVocabulary(skipped));
    }
    Ok((sum, skipped))
}

/// Embeds an article that was not part of the training network.
pub fn infer_unseen(doc: &Document, table: &EmbeddingTable, featurizer: &Featurizer) -> Result<(Vec<f64>, usize)> {
    let bag = featurizer.bag(doc)?;
    embed_news(&bag, table)
}
