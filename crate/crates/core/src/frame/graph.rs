use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FrameError;

/// Undirected area adjacency with connected-component bookkeeping.
///
/// Nodes are 0-based internally; files and constructors take 1-based ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    nodes: usize,
    /// Canonical 0-based edges, `a < b`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
    component: Vec<usize>,
    component_sizes: Vec<usize>,
}

impl AdjacencyGraph {
    /// Builds a graph from 1-based node pairs over `nodes` areas.
    pub fn from_edges(nodes: usize, pairs: &[(usize, usize)]) -> Result<Self, FrameError> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            for id in [a, b] {
                if id == 0 || id > nodes {
                    return Err(FrameError::Graph(format!("node id {id} out of range 1..={nodes}")));
                }
            }
            if a == b {
                return Err(FrameError::Graph(format!("self-loop on node {a}")));
            }
            edges.push((a.min(b) - 1, a.max(b) - 1));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut adj = vec![Vec::new(); nodes];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        // Labels follow the smallest node id in each component, so they do
        // not depend on edge order.
        let mut component = vec![usize::MAX; nodes];
        let mut component_sizes = Vec::new();
        for start in 0..nodes {
            if component[start] != usize::MAX {
                continue;
            }
            let label = component_sizes.len();
            let mut size = 0;
            let mut queue = VecDeque::from([start]);
            component[start] = label;
            while let Some(v) = queue.pop_front() {
                size += 1;
                for &w in &adj[v] {
                    if component[w] == usize::MAX {
                        component[w] = label;
                        queue.push_back(w);
                    }
                }
            }
            component_sizes.push(size);
        }
        Ok(AdjacencyGraph { nodes, edges, component, component_sizes })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn component_of(&self, node: usize) -> usize {
        self.component[node]
    }

    pub fn components(&self) -> &[usize] {
        &self.component
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    pub fn component_count(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn is_island(&self, node: usize) -> bool {
        self.component_sizes[self.component[node]] == 1
    }

    /// Nodes of each component, in increasing node order.
    pub fn component_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.component_sizes.len()];
        for (v, &c) in self.component.iter().enumerate() {
            out[c].push(v);
        }
        out
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// The 51-area US map (states plus DC), islands Alaska and Hawaii.
    pub fn us_states() -> Self {
        Self::from_edges(51, &super::us::state_edges()).expect("static edge table is valid")
    }

    /// 1-based canonical edge list, as written to `edges.csv`.
    pub fn one_based_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect()
    }
}

/// Reads an edge list (`node1,node2`, 1-based, header row) over `nodes` areas.
pub fn load_adjacency(path: &Path, nodes: usize) -> Result<AdjacencyGraph, FrameError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FrameError::io(path, e))?;
    let mut pairs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FrameError::io(path, e))?;
        let parse = |i: usize| -> Result<usize, FrameError> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| FrameError::Graph(format!("line {}: bad node id", line + 2)))
        };
        pairs.push((parse(0)?, parse(1)?));
    }
    AdjacencyGraph::from_edges(nodes, &pairs)
}

pub fn write_adjacency(path: &Path, graph: &AdjacencyGraph) -> Result<(), FrameError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FrameError::io(path, e))?;
    w.write_record(["node1", "node2"]).map_err(|e| FrameError::io(path, e))?;
    for (a, b) in graph.one_based_edges() {
        w.write_record([a.to_string(), b.to_string()]).map_err(|e| FrameError::io(path, e))?;
    }
    w.flush().map_err(|e| FrameError::io(path, e))
}
