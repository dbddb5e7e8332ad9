//! Second-order biased random walks over the news network.
//!
//! Having just moved `t -> v`, the walk picks the next node `x` among the
//! neighbours of `v` with mass `alpha(t, x) * w(v, x)`, where `alpha` is
//! `1/p` for a return to `t`, `1` when `x` is adjacent to `t` and `1/q`
//! otherwise. In a bipartite graph the middle case never occurs.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Inverse transform on the running sum of masses (exact).
    #[default]
    Cumulative,
    /// Precomputed alias tables per directed edge.
    Alias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    /// Nodes per walk, start node included.
    pub length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub sampler: SamplerKind,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            length: 100,
            walks_per_node: 10,
            p: 1.0,
            q: 1.0,
            seed: 0,
            sampler: SamplerKind::Cumulative,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidConfig(format!(
                "walk length must be >= 2, got {}",
                self.length
            )));
        }
        if self.walks_per_node < 1 {
            return Err(Error::InvalidConfig("walks_per_node must be >= 1".into()));
        }
        if !(self.p > 0.0 && self.p.is_finite() && self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "p and q must be positive, got p={} q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Unnormalised masses over `cur`'s neighbours, in neighbour order.
fn masses(graph: &AttributedGraph, prev: Option<usize>, cur: usize, p: f64, q: f64) -> Vec<f64> {
    graph
        .neighbors(cur)
        .iter()
        .map(|&(x, w)| match prev {
            None => w,
            Some(t) if x == t => w / p,
            Some(t) if graph.is_adjacent(t, x) => w,
            Some(_) => w / q,
        })
        .collect()
}

/// Normalised next-step distribution `(neighbour, probability)`. With no
/// predecessor the step is proportional to edge weight.
pub fn transition_distribution(
    graph: &AttributedGraph,
    prev: Option<usize>,
    cur: usize,
    config: &WalkConfig,
) -> Result<Vec<(usize, f64)>> {
    if graph.degree(cur) == 0 {
        return Err(Error::IsolatedNode(graph.node(cur).id.clone()));
    }
    let m = masses(graph, prev, cur, config.p, config.q);
    let z: f64 = m.iter().sum();
    Ok(graph
        .neighbors(cur)
        .iter()
        .zip(m)
        .map(|(&(x, _), mass)| (x, mass / z))
        .collect())
}

fn invert_cumulative<R: Rng>(masses: &[f64], rng: &mut R) -> usize {
    let total: f64 = masses.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    // rounding can leave u == total; fall back to the last positive mass
    masses.iter().rposition(|&m| m > 0.0).unwrap_or(masses.len() - 1)
}

/// Vose alias table.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(masses: &[f64]) -> Self {
        let n = masses.len();
        let total: f64 = masses.iter().sum();
        let mut scaled: Vec<f64> = masses.iter().map(|m| m * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        AliasTable { prob, alias }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

struct AliasIndex {
    first: Vec<AliasTable>,
    /// `second[v][k]`: arrived at `v` from its `k`-th neighbour
    second: Vec<Vec<AliasTable>>,
}

impl AliasIndex {
    fn build(graph: &AttributedGraph, p: f64, q: f64) -> Self {
        let n = graph.n_nodes();
        let first = (0..n).map(|v| AliasTable::new(&masses(graph, None, v, p, q))).collect();
        let second = (0..n)
            .into_par_iter()
            .map(|v| {
                graph
                    .neighbors(v)
                    .iter()
                    .map(|&(t, _)| AliasTable::new(&masses(graph, Some(t), v, p, q)))
                    .collect()
            })
            .collect();
        AliasIndex { first, second }
    }
}

fn walk_from<R: Rng>(
    graph: &AttributedGraph,
    start: usize,
    config: &WalkConfig,
    alias: Option<&AliasIndex>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut walk = Vec::with_capacity(config.length);
    walk.push(start);
    let mut prev: Option<usize> = None;
    let mut cur = start;
    while walk.len() < config.length {
        let neighbors = graph.neighbors(cur);
        if neighbors.is_empty() {
            return Err(Error::IsolatedNode(graph.node(cur).id.clone()));
        }
        let k = match (alias, prev) {
            (Some(a), None) => a.first[cur].sample(rng),
            (Some(a), Some(t)) => {
                let from = neighbors
                    .binary_search_by_key(&t, |&(j, _)| j)
                    .expect("walk predecessor is a neighbour");
                a.second[cur][from].sample(rng)
            }
            (None, _) => invert_cumulative(&masses(graph, prev, cur, config.p, config.q), rng),
        };
        prev = Some(cur);
        cur = neighbors[k].0;
        walk.push(cur);
    }
    Ok(walk)
}

/// `walks_per_node` walks from every node. Each start node draws from its
/// own stream seeded by `(seed, node id)`, so the output does not depend on
/// the thread count. Walks are ordered round by round, nodes in id order.
pub fn sample_walks(graph: &AttributedGraph, config: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    let alias = match config.sampler {
        SamplerKind::Alias => Some(AliasIndex::build(graph, config.p, config.q)),
        SamplerKind::Cumulative => None,
    };
    let per_node: Vec<Vec<Vec<usize>>> = (0..graph.n_nodes())
        .into_par_iter()
        .map(|start| {
            let mut rng = rng_for(config.seed, &format!("walk:{}", graph.node(start).id));
            (0..config.walks_per_node)
                .map(|_| walk_from(graph, start, config, alias.as_ref(), &mut rng))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut walks = Vec::with_capacity(per_node.len() * config.walks_per_node);
    for round in 0..config.walks_per_node {
        for node_walks in &per_node {
            walks.push(node_walks[round].clone());
        }
    }
    Ok(walks)
}

/// One walk per line, node ids separated by single spaces.
pub fn write_walks<W: Write>(graph: &AttributedGraph, walks: &[Vec<usize>], mut out: W) -> std::io::Result<()> {
    for walk in walks {
        let mut first = true;
        for &n in walk {
            if !first {
                out.write_all(b" ")?;
            }
            out.write_all(graph.node(n).id.as_bytes())?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_walks<R: BufRead>(graph: &AttributedGraph, input: R) -> Result<Vec<Vec<usize>>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(lineno, line)| {
            let line = line.map_err(|e| Error::parse("walks", e))?;
            line.split_whitespace()
                .map(|id| {
                    graph
                        .index_of(id)
                        .ok_or_else(|| Error::parse(format!("walks:{}", lineno + 1), format!("unknown node `{id}`")))
                })
                .collect()
        })
        .collect()
}
