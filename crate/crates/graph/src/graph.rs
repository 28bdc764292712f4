//! Undirected simple graphs with dense per-node feature vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

pub type NodeId = usize;

/// An undirected simple graph with contiguous node ids `0..n`.
///
/// Adjacency lists are kept sorted so every traversal over the graph is
/// deterministic. Features are stored row-major, `dim` values per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    features: Vec<f64>,
    dim: usize,
    max_degree: usize,
}

/// Serialized shape of a graph: node features plus an undirected edge list.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphRepr {
    features: Vec<Vec<f64>>,
    edges: Vec<(NodeId, NodeId)>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = GraphError;

    fn try_from(repr: GraphRepr) -> Result<Self, Self::Error> {
        Graph::from_feature_rows(repr.features, &repr.edges)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            features: (0..g.node_count()).map(|v| g.features(v).to_vec()).collect(),
            edges: g.edges(),
        }
    }
}

impl Graph {
    /// Builds a graph from an edge list and a flat row-major feature buffer.
    pub fn new(
        n: usize,
        edges: &[(NodeId, NodeId)],
        features: Vec<f64>,
        dim: usize,
    ) -> Result<Self, GraphError> {
        if dim == 0 {
            return Err(GraphError::FeatureDimension {
                expected: 1,
                found: 0,
            });
        }
        if features.len() != n * dim {
            return Err(GraphError::FeatureDimension {
                expected: n * dim,
                found: features.len(),
            });
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(GraphError::NodeOutOfRange { node: w, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                let dup = list.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]);
                return Err(GraphError::DuplicateEdge(u, dup.unwrap_or(u)));
            }
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Graph {
            adjacency,
            features,
            dim,
            max_degree,
        })
    }

    /// Graph whose nodes all carry the same one-dimensional feature `1.0`.
    pub fn with_uniform_features(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        Graph::new(n, edges, vec![1.0; n], 1)
    }

    pub fn from_feature_rows(
        rows: Vec<Vec<f64>>,
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self, GraphError> {
        let n = rows.len();
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(GraphError::FeatureDimension {
                expected: dim,
                found: bad.len(),
            });
        }
        let flat = if n == 0 { Vec::new() } else { rows.concat() };
        Graph::new(n, edges, flat, dim.max(1))
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn features(&self, v: NodeId) -> &[f64] {
        &self.features[v * self.dim..(v + 1) * self.dim]
    }

    pub fn feature_buffer(&self) -> &[f64] {
        &self.features
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Every undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| u < v).map(|&v| (u, v)));
        }
        out
    }

    pub fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if v < self.node_count() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                node: v,
                n: self.node_count(),
            })
        }
    }

    /// Breadth-first distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Subgraph induced by `nodes`; node `i` of the result is `nodes[i]`.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Graph {
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for &w in &self.adjacency[v] {
                let j = local[w];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        let mut features = Vec::with_capacity(nodes.len() * self.dim);
        for &v in nodes {
            features.extend_from_slice(self.features(v));
        }
        Graph::new(nodes.len(), &edges, features, self.dim)
            .expect("induced subgraph of a valid graph is valid")
    }

    /// The graph with node `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[NodeId]) -> Graph {
        assert_eq!(perm.len(), self.node_count(), "permutation length");
        let edges: Vec<_> = self.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut features = vec![0.0; self.features.len()];
        for v in 0..self.node_count() {
            let to = perm[v];
            features[to * self.dim..(to + 1) * self.dim].copy_from_slice(self.features(v));
        }
        Graph::new(self.node_count(), &edges, features, self.dim)
            .expect("permutation of a valid graph is valid")
    }

    /// Disjoint union; nodes of `other` are shifted by `self.node_count()`.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Graph, GraphError> {
        if self.dim != other.dim {
            return Err(GraphError::FeatureDimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        let shift = self.node_count();
        let mut edges = self.edges();
        edges.extend(other.edges().into_iter().map(|(u, v)| (u + shift, v + shift)));
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        Graph::new(shift + other.node_count(), &edges, features, self.dim)
    }

    /// Node lists of the connected components, each sorted, ordered by smallest id.
    pub fn connected_components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.node_count()];
        let mut out = Vec::new();
        for s in 0..self.node_count() {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                i += 1;
                for &w in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() <= 1 || self.connected_components().len() == 1
    }

    /// Sorted degree sequence, ascending.
    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut d: Vec<_> = self.adjacency.iter().map(Vec::len).collect();
        d.sort_unstable();
        d
    }

    /// Checks the structural invariants: symmetry, no loops, no duplicates,
    /// consistent feature width and cached maximum degree.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        if self.features.len() != n * self.dim {
            return Err(GraphError::FeatureDimension {
                expected: n * self.dim,
                found: self.features.len(),
            });
        }
        for (u, list) in self.adjacency.iter().enumerate() {
            for (i, &v) in list.iter().enumerate() {
                if v >= n {
                    return Err(GraphError::NodeOutOfRange { node: v, n });
                }
                if v == u {
                    return Err(GraphError::SelfLoop(u));
                }
                if i > 0 && list[i - 1] >= v {
                    return Err(GraphError::DuplicateEdge(u, v));
                }
                if !self.has_edge(v, u) {
                    return Err(GraphError::Asymmetric(u, v));
                }
            }
        }
        let true_max = self.adjacency.iter().map(Vec::len).max().unwrap_or(0);
        if true_max != self.max_degree {
            return Err(GraphError::Asymmetric(true_max, self.max_degree));
        }
        Ok(())
    }
}

/// A connected pattern `H` with a distinguished anchor node `v_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchoredPattern {
    pattern: Graph,
    anchor: NodeId,
    radius: usize,
    /// When set, pattern node features must equal host node features.
    pub match_features: bool,
}

impl AnchoredPattern {
    pub fn new(pattern: Graph, anchor: NodeId) -> Result<Self, GraphError> {
        pattern.check_node(anchor)?;
        if !pattern.is_connected() {
            return Err(GraphError::DisconnectedPattern);
        }
        let radius = pattern
            .bfs_distances(anchor)
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0);
        Ok(AnchoredPattern {
            pattern,
            anchor,
            radius,
            match_features: false,
        })
    }

    pub fn with_feature_matching(mut self) -> Self {
        self.match_features = true;
        self
    }

    /// A single edge anchored at one endpoint.
    pub fn edge() -> Self {
        let g = Graph::with_uniform_features(2, &[(0, 1)]).expect("edge");
        AnchoredPattern::new(g, 0).expect("edge pattern")
    }

    /// A triangle anchored at one corner.
    pub fn triangle() -> Self {
        let g = Graph::with_uniform_features(3, &[(0, 1), (1, 2), (0, 2)]).expect("triangle");
        AnchoredPattern::new(g, 0).expect("triangle pattern")
    }

    pub fn pattern(&self) -> &Graph {
        &self.pattern
    }

    pub fn anchor(&self) -> NodeId {
        self.anchor
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// The same pattern re-anchored at another node.
    pub fn reanchored(&self, anchor: NodeId) -> Result<Self, GraphError> {
        let mut p = AnchoredPattern::new(self.pattern.clone(), anchor)?;
        p.match_features = self.match_features;
        Ok(p)
    }

    /// Largest anchor eccentricity over all possible anchors.
    pub fn max_eccentricity(&self) -> usize {
        (0..self.pattern.node_count())
            .map(|v| {
                self.pattern
                    .bfs_distances(v)
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::with_uniform_features(n, &edges).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(matches!(
            Graph::with_uniform_features(2, &[(1, 1)]),
            Err(GraphError::SelfLoop(1))
        ));
        assert!(matches!(
            Graph::with_uniform_features(2, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(
            Graph::with_uniform_features(2, &[(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, n: 2 })
        ));
    }

    #[test]
    fn caches_max_degree_and_sorts_lists() {
        let g = Graph::with_uniform_features(4, &[(0, 3), (0, 1), (0, 2)]).unwrap();
        assert_eq!(g.max_degree(), 3);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        g.validate().unwrap();
    }

    #[test]
    fn bfs_and_components() {
        let g = path(5).disjoint_union(&path(2)).unwrap();
        assert_eq!(g.bfs_distances(0)[4], Some(4));
        assert_eq!(g.bfs_distances(0)[5], None);
        assert_eq!(g.connected_components().len(), 2);
    }

    #[test]
    fn serde_round_trip_preserves_graph() {
        let g = path(4);
        let s = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn anchored_pattern_radius() {
        let p = AnchoredPattern::new(path(5), 0).unwrap();
        assert_eq!(p.radius(), 4);
        assert_eq!(p.reanchored(2).unwrap().radius(), 2);
        assert_eq!(p.max_eccentricity(), 4);
        let disconnected = Graph::with_uniform_features(2, &[]).unwrap();
        assert!(AnchoredPattern::new(disconnected, 0).is_err());
    }
}
