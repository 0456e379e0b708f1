//! Directed transition graphs for the particle and environment state spaces.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A finite directed graph with labelled vertices, no self-loops and no
/// duplicate edges. Edges are stored in declaration order; rate tables are
/// indexed by that order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectedGraph {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    out_adj: Vec<Vec<usize>>,
    #[serde(skip)]
    in_adj: Vec<Vec<usize>>,
}

impl DirectedGraph {
    pub fn new(labels: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Graph("no vertices".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop at {u}")));
            }
            if !seen.insert((u, v)) {
                return Err(Error::Graph(format!("duplicate edge ({u},{v})")));
            }
        }
        let mut g = Self {
            labels,
            edges,
            out_adj: Vec::new(),
            in_adj: Vec::new(),
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    /// Rebuilds the adjacency indices (needed after deserialisation).
    pub fn rebuild_adjacency(&mut self) {
        let n = self.labels.len();
        self.out_adj = vec![Vec::new(); n];
        self.in_adj = vec![Vec::new(); n];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            self.out_adj[u].push(e);
            self.in_adj[v].push(e);
        }
    }

    /// Vertices labelled `0..n` as strings.
    pub fn numbered(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    /// Edge indices leaving `v`.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    /// Edge indices entering `v`.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// Index of the edge `(u, v)` if declared.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.out_adj[u]
            .iter()
            .copied()
            .find(|&e| self.edges[e].1 == v)
    }

    /// Strong connectivity of the whole vertex set.
    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected_components(self.labels.len(), &self.edges).len() == 1
    }
}

/// Strongly connected components of the graph `(0..n, edges)`, via petgraph's
/// Tarjan implementation. Components are returned in reverse topological
/// order of the condensation.
pub fn strongly_connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut g = petgraph::graph::DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for &(u, v) in edges {
        g.add_edge(nodes[u], nodes[v], ());
    }
    petgraph::algo::tarjan_scc(&g)
        .into_iter()
        .map(|comp| comp.into_iter().map(|ix| ix.index()).collect())
        .collect()
}
