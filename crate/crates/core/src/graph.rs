//! The attributed news network: a weighted bipartite graph between news
//! nodes and element nodes.
//!
//! Nodes are stored sorted by id, so neighbour lists sorted by index are
//! also sorted by id and every traversal is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureBag, TfidfTable, ELEMENT_PREFIX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    News,
    Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// News: the article's features. Element: the singleton `{elem:<token>}`.
    pub features: FeatureBag,
}

/// Input for one news node.
#[derive(Debug, Clone)]
pub struct NewsEntry {
    pub id: String,
    pub elements: BTreeSet<String>,
    pub features: FeatureBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    removed_news: BTreeMap<String, FeatureBag>,
}

pub fn element_node_id(token: &str) -> String {
    format!("{ELEMENT_PREFIX}{token}")
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::parse(id, "node ids must be non-empty and contain no whitespace"));
    }
    Ok(())
}

/// Sum of the document's element scores in one field (the L1 normaliser).
fn field_mass(table: &TfidfTable, doc: &str, elements: &BTreeSet<String>) -> f64 {
    elements.iter().map(|e| table.score(doc, e)).sum()
}

/// Edge weight = title score / title mass + body score / body mass, where
/// each mass is the sum over the document's elements in that field. A field
/// with zero mass contributes nothing; zero-weight edges are dropped.
pub fn build_network(news: &[NewsEntry], title: &TfidfTable, body: &TfidfTable) -> Result<AttributedGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut element_ids = BTreeSet::new();
    for entry in news {
        if entry.id.starts_with(ELEMENT_PREFIX) {
            return Err(Error::parse(&entry.id, "news ids may not use the element prefix"));
        }
        nodes.push(Node {
            id: entry.id.clone(),
            kind: NodeKind::News,
            features: entry.features.clone(),
        });
        let z_title = field_mass(title, &entry.id, &entry.elements);
        let z_body = field_mass(body, &entry.id, &entry.elements);
        for e in &entry.elements {
            let mut w = 0.0;
            if z_title > 0.0 {
                w += title.score(&entry.id, e) / z_title;
            }
            if z_body > 0.0 {
                w += body.score(&entry.id, e) / z_body;
            }
            if w > 0.0 {
                let eid = element_node_id(e);
                element_ids.insert(eid.clone());
                edges.push((entry.id.clone(), eid, w));
            }
        }
    }
    for eid in element_ids {
        let features = std::iter::once(eid.clone()).collect();
        nodes.push(Node {
            id: eid,
            kind: NodeKind::Element,
            features,
        });
    }
    AttributedGraph::from_parts(nodes, edges, BTreeMap::new())
}

impl AttributedGraph {
    /// Validates ids, bipartiteness and weights, then sorts everything.
    pub fn from_parts(
        mut nodes: Vec<Node>,
        edges: Vec<(String, String, f64)>,
        removed_news: BTreeMap<String, FeatureBag>,
    ) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            check_id(&n.id)?;
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::parse(&n.id, "duplicate node id"));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (a, b, w) in edges {
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::parse(id, "edge references an unknown node"))
            };
            let (ia, ib) = (lookup(&a)?, lookup(&b)?);
            if nodes[ia].kind == nodes[ib].kind {
                return Err(Error::parse(
                    format!("{a} -- {b}"),
                    "edge joins two nodes of the same kind",
                ));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::parse(
                    format!("{a} -- {b}"),
                    format!("edge weight {w} is not positive"),
                ));
            }
            adjacency[ia].push((ib, w));
            adjacency[ib].push((ia, w));
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_by_key(|&(j, _)| j);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::parse(&nodes[i].id, "duplicate edge"));
            }
        }
        Ok(AttributedGraph {
            nodes,
            index,
            adjacency,
            removed_news,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        let list = &self.adjacency[a];
        list.binary_search_by_key(&b, |&(j, _)| j).ok().map(|k| list[k].1)
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.edge_weight(a, b).is_some()
    }

    /// Each undirected edge once, as `(lower index, higher index, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w)))
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// News nodes removed by pruning, with their feature bags.
    pub fn removed_news(&self) -> &BTreeMap<String, FeatureBag> {
        &self.removed_news
    }

    /// Repeatedly removes nodes of degree ≤ 1 until none remain.
    pub fn prune(&self) -> Result<AttributedGraph> {
        let n = self.nodes.len();
        let mut degree: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        let mut alive = vec![true; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
        while let Some(i) = queue.pop_front() {
            if !alive[i] {
                continue;
            }
            alive[i] = false;
            for &(j, _) in &self.adjacency[i] {
                if alive[j] {
                    degree[j] -= 1;
                    if degree[j] == 1 {
                        queue.push_back(j);
                    }
                }
            }
        }
        if !alive.iter().any(|&a| a) {
            return Err(Error::EmptyGraph {
                news: self.count_kind(NodeKind::News),
                elements: self.count_kind(NodeKind::Element),
            });
        }
        let mut removed_news = self.removed_news.clone();
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if alive[i] {
                nodes.push(node.clone());
            } else if node.kind == NodeKind::News {
                removed_news.insert(node.id.clone(), node.features.clone());
            }
        }
        let edges = self
            .edges()
            .filter(|&(a, b, _)| alive[a] && alive[b])
            .map(|(a, b, w)| (self.nodes[a].id.clone(), self.nodes[b].id.clone(), w))
            .collect();
        AttributedGraph::from_parts(nodes, edges, removed_news)
    }

    /// `node_a \t node_b \t weight`, one line per undirected edge.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, b, w) in self.edges() {
            writeln!(out, "{}\t{}\t{}", self.nodes[a].id, self.nodes[b].id, w)?;
        }
        Ok(())
    }

    /// One JSON object per node; pruned news nodes carry `"pruned": true`.
    pub fn write_nodes<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |rec: &NodeRecord| -> std::io::Result<()> {
            writeln!(out, "{}", serde_json::to_string(rec).map_err(std::io::Error::other)?)
        };
        for n in &self.nodes {
            line(&NodeRecord {
                id: n.id.clone(),
                kind: n.kind,
                features: n.features.iter().map(String::from).collect(),
                pruned: false,
            })?;
        }
        for (id, bag) in &self.removed_news {
            line(&NodeRecord {
                id: id.clone(),
                kind: NodeKind::News,
                features: bag.iter().map(String::from).collect(),
                pruned: true,
            })?;
        }
        Ok(())
    }

    pub fn read<E: BufRead, N: BufRead>(edges: E, nodes: N) -> Result<Self> {
        let mut node_list = Vec::new();
        let mut removed = BTreeMap::new();
        for (lineno, line) in nodes.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("nodes", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: NodeRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(format!("nodes:{}", lineno + 1), e))?;
            let features: FeatureBag = rec.features.into_iter().collect();
            if rec.pruned {
                removed.insert(rec.id, features);
            } else {
                node_list.push(Node {
                    id: rec.id,
                    kind: rec.kind,
                    features,
                });
            }
        }
        let mut edge_list = Vec::new();
        for (lineno, line) in edges.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("edges", e))?;
            if line.is_empty() {
                continue;
            }
            let loc = || format!("edges:{}", lineno + 1);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(loc(), "expected 3 tab-separated columns"));
            }
            let w: f64 = cols[2].parse().map_err(|e| Error::parse(loc(), e))?;
            edge_list.push((cols[0].to_string(), cols[1].to_string(), w));
        }
        AttributedGraph::from_parts(node_list, edge_list, removed)
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    kind: NodeKind,
    features: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pruned: bool,
}
