//! Exhaustive counting oracles.
//!
//! Every function here is brute force on purpose: these are the ground truth
//! that the walking agents and the learned model are checked against.

use crate::error::GraphError;
use crate::graph::{AnchoredPattern, Graph, NodeId};

/// Exhaustive search budget for anchored pattern counting.
pub const MAX_PATTERN_NODES: usize = 10;

/// The subgraph induced on the ball `{u : dist(u, v) <= r}`.
///
/// Returns the ball in BFS order (so local node 0 is `v`) together with the
/// map from local ids to ids of `g`.
pub fn r_hop_neighborhood(
    g: &Graph,
    v: NodeId,
    r: usize,
) -> Result<(Graph, Vec<NodeId>), GraphError> {
    g.check_node(v)?;
    let dist = g.bfs_distances(v);
    let mut ball: Vec<NodeId> = (0..g.node_count())
        .filter(|&u| matches!(dist[u], Some(d) if d <= r))
        .collect();
    ball.sort_by_key(|&u| (dist[u], u));
    Ok((g.induced_subgraph(&ball), ball))
}

/// Number of cliques with exactly `size` nodes that contain `v`.
pub fn count_cliques_at(g: &Graph, v: NodeId, size: usize) -> Result<u64, GraphError> {
    g.check_node(v)?;
    if size < 2 {
        return Err(GraphError::InvalidArgument(format!(
            "clique size must be at least 2, got {size}"
        )));
    }
    let mut chosen = Vec::with_capacity(size);
    Ok(extend_cliques(g, g.neighbors(v), 0, size - 1, &mut chosen))
}

fn extend_cliques(
    g: &Graph,
    pool: &[NodeId],
    from: usize,
    remaining: usize,
    chosen: &mut Vec<NodeId>,
) -> u64 {
    if remaining == 0 {
        return 1;
    }
    let mut total = 0;
    for i in from..pool.len() {
        let u = pool[i];
        if chosen.iter().all(|&c| g.has_edge(c, u)) {
            chosen.push(u);
            total += extend_cliques(g, pool, i + 1, remaining - 1, chosen);
            chosen.pop();
        }
    }
    total
}

/// Global clique count, each clique counted once via its smallest node.
pub fn count_cliques_total(g: &Graph, size: usize) -> u64 {
    if size == 0 {
        return 0;
    }
    let mut total = 0;
    let mut chosen = Vec::with_capacity(size);
    for v in 0..g.node_count() {
        let higher: Vec<NodeId> = g.neighbors(v).iter().copied().filter(|&u| u > v).collect();
        total += extend_cliques(g, &higher, 0, size - 1, &mut chosen);
    }
    total
}

/// Number of distinct simple cycles of length `c` through `v`.
///
/// Each cycle is walked starting at `v`; of its two orientations only the one
/// whose second node is smaller than its last node is counted.
pub fn count_cycles_through(g: &Graph, v: NodeId, c: usize) -> Result<u64, GraphError> {
    g.check_node(v)?;
    if c < 3 {
        return Err(GraphError::InvalidArgument(format!(
            "cycle length must be at least 3, got {c}"
        )));
    }
    let mut on_path = vec![false; g.node_count()];
    on_path[v] = true;
    let mut path = vec![v];
    let mut count = 0;
    cycle_paths(g, v, c, &mut path, &mut on_path, &mut |p| {
        if p[1] < p[p.len() - 1] {
            count += 1;
        }
    });
    Ok(count)
}

/// Enumerates simple paths `start = p[0], .., p[c-1]` with `p[c-1]` adjacent
/// to `start`, i.e. closed walks of length `c` without repeated nodes.
fn cycle_paths(
    g: &Graph,
    start: NodeId,
    c: usize,
    path: &mut Vec<NodeId>,
    on_path: &mut [bool],
    visit: &mut dyn FnMut(&[NodeId]),
) {
    let last = *path.last().expect("path is never empty");
    if path.len() == c {
        if g.has_edge(last, start) {
            visit(path);
        }
        return;
    }
    for &w in g.neighbors(last) {
        if !on_path[w] {
            on_path[w] = true;
            path.push(w);
            cycle_paths(g, start, c, path, on_path, visit);
            path.pop();
            on_path[w] = false;
        }
    }
}

/// Global count of simple `c`-cycles; canonical form is the rotation starting
/// at the smallest node id with the lexicographically smaller orientation.
pub fn count_cycles_total(g: &Graph, c: usize) -> u64 {
    if c < 3 {
        return 0;
    }
    let mut total = 0;
    let mut on_path = vec![false; g.node_count()];
    for v in 0..g.node_count() {
        on_path[v] = true;
        let mut path = vec![v];
        cycle_paths(g, v, c, &mut path, &mut on_path, &mut |p| {
            if p.iter().all(|&u| u >= v) && p[1] < p[p.len() - 1] {
                total += 1;
            }
        });
        on_path[v] = false;
    }
    total
}

/// How anchored occurrences are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OccurrenceMode {
    /// Embeddings modulo automorphisms of the anchored pattern.
    #[default]
    ModuloAutomorphisms,
    /// Raw injective embeddings.
    RawEmbeddings,
}

/// Number of induced occurrences of `p` in `g` with the anchor mapped to `v`.
pub fn count_anchored_occurrences(
    g: &Graph,
    v: NodeId,
    p: &AnchoredPattern,
) -> Result<u64, GraphError> {
    count_anchored_occurrences_with(g, v, p, OccurrenceMode::default())
}

pub fn count_anchored_occurrences_with(
    g: &Graph,
    v: NodeId,
    p: &AnchoredPattern,
    mode: OccurrenceMode,
) -> Result<u64, GraphError> {
    g.check_node(v)?;
    let h = p.pattern();
    if h.node_count() > MAX_PATTERN_NODES {
        return Err(GraphError::PatternTooLarge {
            size: h.node_count(),
            limit: MAX_PATTERN_NODES,
        });
    }
    let raw = InducedEmbedder::new(h, p.anchor(), g, p.match_features).count_from(v);
    match mode {
        OccurrenceMode::RawEmbeddings => Ok(raw),
        OccurrenceMode::ModuloAutomorphisms => {
            let automorphisms =
                InducedEmbedder::new(h, p.anchor(), h, p.match_features).count_from(p.anchor());
            Ok(raw / automorphisms.max(1))
        }
    }
}

/// Whether `v` lies on at least one induced copy of the pattern, in any role.
pub fn is_incident_to_pattern(
    g: &Graph,
    v: NodeId,
    p: &AnchoredPattern,
) -> Result<bool, GraphError> {
    for anchor in 0..p.pattern().node_count() {
        let q = p.reanchored(anchor)?;
        if count_anchored_occurrences_with(g, v, &q, OccurrenceMode::RawEmbeddings)? > 0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `gamma_H(G)`: the number of nodes incident to an induced copy of `H`.
pub fn pattern_incidence_count(g: &Graph, p: &AnchoredPattern) -> Result<usize, GraphError> {
    let mut count = 0;
    for v in 0..g.node_count() {
        if is_incident_to_pattern(g, v, p)? {
            count += 1;
        }
    }
    Ok(count)
}

/// Backtracking enumerator of induced embeddings of `pattern` into `host`.
struct InducedEmbedder<'a> {
    pattern: &'a Graph,
    host: &'a Graph,
    match_features: bool,
    /// Pattern nodes in BFS order from the anchor.
    order: Vec<NodeId>,
    /// For `order[i]` (i > 0), an earlier pattern node adjacent to it.
    parent: Vec<NodeId>,
}

impl<'a> InducedEmbedder<'a> {
    fn new(pattern: &'a Graph, anchor: NodeId, host: &'a Graph, match_features: bool) -> Self {
        let n = pattern.node_count();
        let mut order = vec![anchor];
        let mut parent = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        seen[anchor] = true;
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            i += 1;
            for &w in pattern.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = u;
                    order.push(w);
                }
            }
        }
        InducedEmbedder {
            pattern,
            host,
            match_features,
            order,
            parent,
        }
    }

    fn count_from(&self, v: NodeId) -> u64 {
        let mut image = vec![usize::MAX; self.pattern.node_count()];
        let mut used = vec![false; self.host.node_count()];
        if !self.compatible(self.order[0], v) {
            return 0;
        }
        image[self.order[0]] = v;
        used[v] = true;
        self.extend(1, &mut image, &mut used)
    }

    fn compatible(&self, h: NodeId, g: NodeId) -> bool {
        !self.match_features || self.pattern.features(h) == self.host.features(g)
    }

    fn extend(&self, depth: usize, image: &mut [NodeId], used: &mut [bool]) -> u64 {
        if depth == self.order.len() {
            return 1;
        }
        let h = self.order[depth];
        let anchor_image = image[self.parent[h]];
        let mut total = 0;
        for &cand in self.host.neighbors(anchor_image) {
            if used[cand] || !self.compatible(h, cand) {
                continue;
            }
            let consistent = self.order[..depth].iter().all(|&prev| {
                self.pattern.has_edge(h, prev) == self.host.has_edge(cand, image[prev])
            });
            if consistent {
                image[h] = cand;
                used[cand] = true;
                total += self.extend(depth + 1, image, used);
                used[cand] = false;
                image[h] = usize::MAX;
            }
        }
        total
    }
}
