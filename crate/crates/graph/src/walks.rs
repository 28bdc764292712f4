//! Deterministic walk agents: depth-limited exploration, counting walks,
//! neighborhood fingerprints and the random-walk access model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::Serialize;

use crate::error::WalkError;
use crate::graph::{Graph, NodeId};
use crate::iso::canonical_code;
use crate::oracles::{count_cliques_at, count_cycles_through};
use crate::rng::StreamRng;

/// One entry of a trace. `t = 0` is the initial placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub node: NodeId,
    pub from: Option<NodeId>,
}

/// What a walking agent has seen: its moves, the edges it observed between
/// visited nodes and the features of visited nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraversalTrace {
    pub start: NodeId,
    pub steps: Vec<TraceStep>,
    /// Edges `(u, w)` with `u < w`, registered when the later endpoint was
    /// first visited.
    pub observed_edges: BTreeSet<(NodeId, NodeId)>,
    pub distances: BTreeMap<NodeId, usize>,
    /// Radius of the explored ball, for depth-limited traversals.
    pub radius: Option<usize>,
    discovery: Vec<NodeId>,
    features: BTreeMap<NodeId, Vec<f64>>,
    feature_dim: usize,
    complete: bool,
}

impl TraversalTrace {
    /// Number of transitions (stays included).
    pub fn moves(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Visited nodes in discovery order; the start comes first.
    pub fn discovery_order(&self) -> &[NodeId] {
        &self.discovery
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// The prefix of the trace after `moves` transitions. Anything the
    /// agent had not yet seen by then is dropped.
    pub fn truncated(&self, moves: usize) -> TraversalTrace {
        if moves >= self.moves() {
            return self.clone();
        }
        let steps = self.steps[..=moves].to_vec();
        let seen: BTreeSet<NodeId> = steps.iter().map(|s| s.node).collect();
        TraversalTrace {
            start: self.start,
            observed_edges: self
                .observed_edges
                .iter()
                .copied()
                .filter(|(u, w)| seen.contains(u) && seen.contains(w))
                .collect(),
            distances: self
                .distances
                .iter()
                .filter(|(v, _)| seen.contains(v))
                .map(|(&v, &d)| (v, d))
                .collect(),
            radius: self.radius,
            discovery: self.discovery.iter().copied().filter(|v| seen.contains(v)).collect(),
            features: self
                .features
                .iter()
                .filter(|(v, _)| seen.contains(v))
                .map(|(&v, f)| (v, f.clone()))
                .collect(),
            feature_dim: self.feature_dim,
            complete: false,
            steps,
        }
    }

    /// The subgraph the agent observed, with local node `i` equal to
    /// `discovery_order()[i]` (so the start is local node 0).
    pub fn reconstruct(&self) -> Result<(Graph, Vec<NodeId>), WalkError> {
        if !self.complete {
            return Err(WalkError::IncompleteTrace);
        }
        let local: BTreeMap<NodeId, usize> =
            self.discovery.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let edges: Vec<(usize, usize)> = self
            .observed_edges
            .iter()
            .map(|(u, w)| (local[u], local[w]))
            .collect();
        let mut features = Vec::with_capacity(self.discovery.len() * self.feature_dim);
        for v in &self.discovery {
            features.extend_from_slice(&self.features[v]);
        }
        let g = Graph::new(self.discovery.len(), &edges, features, self.feature_dim)?;
        Ok((g, self.discovery.clone()))
    }
}

struct Recorder<'g> {
    g: &'g Graph,
    trace: TraversalTrace,
    seen: Vec<bool>,
}

impl<'g> Recorder<'g> {
    fn new(g: &'g Graph, start: NodeId) -> Self {
        let mut rec = Recorder {
            g,
            trace: TraversalTrace {
                start,
                steps: vec![TraceStep {
                    t: 0,
                    node: start,
                    from: None,
                }],
                observed_edges: BTreeSet::new(),
                distances: BTreeMap::new(),
                radius: None,
                discovery: Vec::new(),
                features: BTreeMap::new(),
                feature_dim: g.feature_dim(),
                complete: true,
            },
            seen: vec![false; g.node_count()],
        };
        rec.discover(start);
        rec
    }

    fn discover(&mut self, w: NodeId) -> bool {
        if self.seen[w] {
            return false;
        }
        self.seen[w] = true;
        for &x in self.g.neighbors(w) {
            if self.seen[x] {
                self.trace.observed_edges.insert((w.min(x), w.max(x)));
            }
        }
        self.trace.discovery.push(w);
        self.trace.features.insert(w, self.g.features(w).to_vec());
        true
    }

    fn current(&self) -> NodeId {
        self.trace.steps.last().expect("trace has a start").node
    }

    fn move_to(&mut self, w: NodeId) -> bool {
        let from = self.current();
        assert!(
            w == from || self.g.has_edge(from, w),
            "walk left the graph: {from} -> {w}"
        );
        let t = self.trace.steps.len();
        self.trace.steps.push(TraceStep {
            t,
            node: w,
            from: Some(from),
        });
        self.discover(w)
    }

    fn truncate(&mut self, len: usize) {
        self.trace.steps.truncate(len);
    }

    fn finish(mut self) -> TraversalTrace {
        let (local, _) = self.trace.reconstruct().expect("complete by construction");
        for (i, d) in local.bfs_distances(0).into_iter().enumerate() {
            if let Some(d) = d {
                self.trace.distances.insert(self.trace.discovery[i], d);
            }
        }
        self.trace
    }
}

/// Iteratively deepening DFS of the `r`-hop ball around `v`.
///
/// Iteration `d` runs a DFS from `v` that only expands nodes first reached
/// in an earlier iteration (so at distance at most `d - 1`), moving to the
/// lowest-id neighbor not yet visited in this iteration and backtracking
/// via the predecessor. Stops after iteration `r`, or earlier once an
/// iteration finds nothing new. Uses at most `2 * r * |N^r(v)|` moves.
pub fn iddfs_traverse(g: &Graph, v: NodeId, r: usize) -> Result<TraversalTrace, WalkError> {
    g.check_node(v)?;
    if r == 0 {
        return Err(WalkError::Invalid("radius must be at least 1".into()));
    }
    let n = g.node_count();
    let mut rec = Recorder::new(g, v);
    let mut dist = vec![usize::MAX; n];
    dist[v] = 0;
    let mut stamp = vec![0usize; n];
    for d in 1..=r {
        stamp[v] = d;
        let mut found = false;
        let mut last_new = rec.trace.steps.len();
        let mut path = vec![v];
        while let Some(&u) = path.last() {
            let next = if dist[u] < d {
                g.neighbors(u).iter().copied().find(|&w| stamp[w] != d)
            } else {
                None
            };
            match next {
                Some(w) => {
                    stamp[w] = d;
                    if dist[w] == usize::MAX {
                        dist[w] = d;
                        found = true;
                    }
                    rec.move_to(w);
                    if dist[w] == d {
                        last_new = rec.trace.steps.len();
                    }
                    path.push(w);
                }
                None => {
                    path.pop();
                    if let Some(&p) = path.last() {
                        rec.move_to(p);
                    }
                }
            }
        }
        if d == r {
            rec.truncate(last_new);
        }
        if !found {
            break;
        }
    }
    rec.trace.radius = Some(r);
    let trace = rec.finish();
    let ball = trace.discovery.len();
    assert!(
        trace.moves() <= 2 * r * ball,
        "depth-limited traversal used {} moves, bound {}",
        trace.moves(),
        2 * r * ball
    );
    Ok(trace)
}

/// Plain DFS of the whole component of `v`, stopping at the last discovery.
/// Uses at most `2 * n0 - 3` moves on a component of `n0 >= 2` nodes.
pub fn dfs_traverse_component(g: &Graph, v: NodeId) -> Result<TraversalTrace, WalkError> {
    g.check_node(v)?;
    if g.degree(v) == 0 {
        return Err(WalkError::Invalid(format!("node {v} is isolated")));
    }
    let mut rec = Recorder::new(g, v);
    let mut last_new = 1;
    let mut path = vec![v];
    while let Some(&u) = path.last() {
        match g.neighbors(u).iter().copied().find(|&w| !rec.seen[w]) {
            Some(w) => {
                rec.move_to(w);
                last_new = rec.trace.steps.len();
                path.push(w);
            }
            None => {
                path.pop();
                if let Some(&p) = path.last() {
                    rec.move_to(p);
                }
            }
        }
    }
    rec.truncate(last_new);
    let trace = rec.finish();
    let n0 = trace.discovery.len();
    assert!(trace.moves() <= 2 * n0 - 3, "dfs used {} moves on {n0} nodes", trace.moves());
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliqueWalk {
    /// Cliques through the start, keyed by size `3..=deg + 1`.
    pub counts: BTreeMap<usize, u64>,
    pub steps: usize,
    pub trace: TraversalTrace,
}

/// Visits each neighbor of `v` in turn, returning to `v` in between, then
/// counts cliques through `v` in the observed 1-hop subgraph.
/// Uses `max(0, 2 * deg(v) - 1)` moves.
pub fn clique_count_walk(g: &Graph, v: NodeId) -> Result<CliqueWalk, WalkError> {
    g.check_node(v)?;
    let mut rec = Recorder::new(g, v);
    for (i, &u) in g.neighbors(v).iter().enumerate() {
        if i > 0 {
            rec.move_to(v);
        }
        rec.move_to(u);
    }
    rec.trace.radius = Some(1);
    let trace = rec.finish();
    let deg = g.degree(v);
    assert!(trace.moves() <= (2 * deg).saturating_sub(1));
    let (local, _) = trace.reconstruct()?;
    let mut counts = BTreeMap::new();
    for size in 3..=deg + 1 {
        counts.insert(size, count_cliques_at(&local, 0, size)?);
    }
    Ok(CliqueWalk {
        counts,
        steps: trace.moves(),
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleWalk {
    pub count: u64,
    pub steps: usize,
    pub trace: TraversalTrace,
}

/// Explores the `floor(c / 2)`-hop ball and counts `c`-cycles through `v`
/// in the observed subgraph.
pub fn cycle_count_walk(g: &Graph, v: NodeId, c: usize) -> Result<CycleWalk, WalkError> {
    if c < 3 {
        return Err(WalkError::Invalid(format!("cycle length {c} < 3")));
    }
    let trace = iddfs_traverse(g, v, c / 2)?;
    let (local, _) = trace.reconstruct()?;
    Ok(CycleWalk {
        count: count_cycles_through(&local, 0, c)?,
        steps: trace.moves(),
        trace,
    })
}

/// The observed neighborhood with an extra feature column marking the
/// start node.
pub fn rooted_neighborhood(trace: &TraversalTrace) -> Result<Graph, WalkError> {
    let (local, _) = trace.reconstruct()?;
    Ok(tag_root(&local, 0))
}

pub(crate) fn tag_root(g: &Graph, root: NodeId) -> Graph {
    let dim = g.feature_dim() + 1;
    let mut features = Vec::with_capacity(g.node_count() * dim);
    for v in 0..g.node_count() {
        features.extend_from_slice(g.features(v));
        features.push(if v == root { 1.0 } else { 0.0 });
    }
    Graph::new(g.node_count(), &g.edges(), features, dim).expect("same structure")
}

/// Canonical code of the rooted neighborhood observed by a traversal:
/// equal codes iff the rooted, feature-labeled neighborhoods are isomorphic.
pub fn neighborhood_fingerprint(trace: &TraversalTrace) -> Result<Vec<u8>, WalkError> {
    Ok(canonical_code(&rooted_neighborhood(trace)?))
}

/// An agent restricted to the random-walk access model: uniform neighbor
/// moves, degree queries, and adjacency queries among discovered nodes.
#[derive(Clone, Debug)]
pub struct AccessModelSession<'g> {
    graph: &'g Graph,
    rng: StreamRng,
    current: NodeId,
    discovered: Vec<NodeId>,
    is_discovered: Vec<bool>,
    degree_answers: BTreeMap<NodeId, usize>,
    adjacency_answers: BTreeMap<(NodeId, NodeId), bool>,
}

impl<'g> AccessModelSession<'g> {
    pub fn new(graph: &'g Graph, start: NodeId, rng: StreamRng) -> Result<Self, WalkError> {
        graph.check_node(start)?;
        let mut is_discovered = vec![false; graph.node_count()];
        is_discovered[start] = true;
        Ok(AccessModelSession {
            graph,
            rng,
            current: start,
            discovered: vec![start],
            is_discovered,
            degree_answers: BTreeMap::new(),
            adjacency_answers: BTreeMap::new(),
        })
    }

    pub fn current(&self) -> NodeId {
        self.current
    }

    pub fn discovered(&self) -> &[NodeId] {
        &self.discovered
    }

    pub fn degree_answers(&self) -> &BTreeMap<NodeId, usize> {
        &self.degree_answers
    }

    pub fn adjacency_answers(&self) -> &BTreeMap<(NodeId, NodeId), bool> {
        &self.adjacency_answers
    }

    /// Moves to a uniform random neighbor; an isolated node stays put.
    pub fn step(&mut self) -> NodeId {
        let nb = self.graph.neighbors(self.current);
        if !nb.is_empty() {
            self.current = nb[self.rng.gen_range(0..nb.len())];
            if !self.is_discovered[self.current] {
                self.is_discovered[self.current] = true;
                self.discovered.push(self.current);
            }
        }
        self.current
    }

    fn require(&self, v: NodeId) -> Result<(), WalkError> {
        self.graph.check_node(v)?;
        if self.is_discovered[v] {
            Ok(())
        } else {
            Err(WalkError::Undiscovered(v))
        }
    }

    pub fn degree_query(&mut self, v: NodeId) -> Result<usize, WalkError> {
        self.require(v)?;
        let d = self.graph.degree(v);
        self.degree_answers.insert(v, d);
        Ok(d)
    }

    pub fn adjacency_query(&mut self, u: NodeId, v: NodeId) -> Result<bool, WalkError> {
        self.require(u)?;
        self.require(v)?;
        let a = self.graph.has_edge(u, v);
        self.adjacency_answers.insert((u.min(v), u.max(v)), a);
        Ok(a)
    }
}

/// BFS distances restricted to the trace's observed edges.
pub fn observed_distances(trace: &TraversalTrace) -> BTreeMap<NodeId, usize> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(u, w) in &trace.observed_edges {
        adj.entry(u).or_default().push(w);
        adj.entry(w).or_default().push(u);
    }
    let mut dist = BTreeMap::from([(trace.start, 0)]);
    let mut queue = VecDeque::from([trace.start]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for &w in adj.get(&u).map_or(&[][..], |v| v.as_slice()) {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_lemma4_pair, rook_4x4, shrikhande};
    use crate::oracles::r_hop_neighborhood;
    use crate::rng::stream_rng;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::with_uniform_features(n, &edges).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::with_uniform_features(n, &edges).unwrap()
    }

    #[test]
    fn star_center_radius_one() {
        let g = Graph::with_uniform_features(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let t = iddfs_traverse(&g, 0, 1).unwrap();
        assert_eq!(t.discovery_order(), &[0, 1, 2, 3]);
        assert_eq!(t.moves(), 5);
    }

    #[test]
    fn path_from_endpoint() {
        let g = path(5);
        let t = iddfs_traverse(&g, 0, 4).unwrap();
        assert_eq!(t.discovery_order().len(), 5);
        assert!(t.moves() <= 40);
        for (v, d) in &t.distances {
            assert_eq!(Some(*d), g.bfs_distances(0)[*v]);
        }
    }

    #[test]
    fn iddfs_never_overshoots() {
        let g = cycle(12);
        let t = iddfs_traverse(&g, 0, 2).unwrap();
        let mut nodes = t.discovery_order().to_vec();
        nodes.sort_unstable();
        assert_eq!(nodes, vec![0, 1, 2, 10, 11]);
        assert!(t.steps.iter().all(|s| nodes.contains(&s.node)));
    }

    #[test]
    fn consecutive_nodes_adjacent() {
        let g = rook_4x4();
        let t = iddfs_traverse(&g, 5, 2).unwrap();
        for w in t.steps.windows(2) {
            assert!(w[0].node == w[1].node || g.has_edge(w[0].node, w[1].node));
            assert_eq!(w[1].from, Some(w[0].node));
        }
        for &(u, v) in &t.observed_edges {
            assert!(g.has_edge(u, v));
        }
    }

    #[test]
    fn dfs_examples() {
        assert_eq!(dfs_traverse_component(&path(4), 0).unwrap().moves(), 3);
        let tri = cycle(3);
        for v in 0..3 {
            assert!(dfs_traverse_component(&tri, v).unwrap().moves() <= 3);
        }
        let iso = Graph::with_uniform_features(2, &[]).unwrap();
        assert!(dfs_traverse_component(&iso, 0).is_err());
    }

    #[test]
    fn clique_walk_examples() {
        for (g, four) in [(rook_4x4(), 2), (shrikhande(), 0)] {
            for v in 0..16 {
                let w = clique_count_walk(&g, v).unwrap();
                assert_eq!(w.steps, 11);
                assert_eq!(w.counts[&3], 6);
                assert_eq!(w.counts[&4], four);
            }
        }
        let (g1, _) = gen_lemma4_pair();
        let w = clique_count_walk(&g1, 0).unwrap();
        assert_eq!(w.counts[&3], 1);
        assert!(w.steps <= 5);
    }

    #[test]
    fn cycle_walk_examples() {
        assert_eq!(cycle_count_walk(&cycle(8), 3, 8).unwrap().count, 1);
        let (_, g2) = gen_lemma4_pair();
        assert_eq!(cycle_count_walk(&g2, 0, 3).unwrap().count, 0);
        assert!(cycle_count_walk(&g2, 0, 2).is_err());
    }

    #[test]
    fn fingerprints() {
        let r = iddfs_traverse(&rook_4x4(), 0, 1).unwrap();
        let s = iddfs_traverse(&shrikhande(), 0, 1).unwrap();
        assert!(r.moves() <= 11 && s.moves() <= 11);
        assert_ne!(
            neighborhood_fingerprint(&r).unwrap(),
            neighborhood_fingerprint(&s).unwrap()
        );
        let a = iddfs_traverse(&cycle(6), 0, 2).unwrap();
        let b = iddfs_traverse(&cycle(8), 5, 2).unwrap();
        assert_eq!(
            neighborhood_fingerprint(&a).unwrap(),
            neighborhood_fingerprint(&b).unwrap()
        );
    }

    #[test]
    fn fingerprint_is_relabel_invariant() {
        let g = shrikhande();
        let perm: Vec<usize> = (0..16).map(|i| (5 * i + 2) % 16).collect();
        let h = g.permuted(&perm);
        let a = iddfs_traverse(&g, 3, 2).unwrap();
        let b = iddfs_traverse(&h, perm[3], 2).unwrap();
        assert_eq!(
            neighborhood_fingerprint(&a).unwrap(),
            neighborhood_fingerprint(&b).unwrap()
        );
    }

    #[test]
    fn reconstruction_matches_ball() {
        let g = rook_4x4();
        let t = iddfs_traverse(&g, 7, 1).unwrap();
        let (local, ids) = t.reconstruct().unwrap();
        let (ball, _) = r_hop_neighborhood(&g, 7, 1).unwrap();
        assert_eq!(local.node_count(), ball.node_count());
        assert_eq!(local.edge_count(), ball.edge_count());
        assert_eq!(ids[0], 7);
        assert_eq!(observed_distances(&t), t.distances);
    }

    #[test]
    fn truncated_trace_is_rejected() {
        let t = iddfs_traverse(&rook_4x4(), 0, 1).unwrap();
        let cut = t.truncated(4);
        assert_eq!(cut.moves(), 4);
        assert!(matches!(
            neighborhood_fingerprint(&cut),
            Err(WalkError::IncompleteTrace)
        ));
        assert_eq!(t.truncated(100), t);
    }

    #[test]
    fn access_model() {
        let g = rook_4x4();
        let mut s = AccessModelSession::new(&g, 0, stream_rng(1, 1)).unwrap();
        assert_eq!(s.degree_query(0).unwrap(), 6);
        assert!(!s.adjacency_query(0, 0).unwrap());
        assert!(matches!(s.adjacency_query(0, 15), Err(WalkError::Undiscovered(15))));
        let next = s.step();
        assert!(g.has_edge(0, next));
        assert!(s.adjacency_query(0, next).unwrap());
        assert_eq!(s.discovered(), &[0, next]);
    }

    #[test]
    fn access_model_on_cycle_splits_evenly() {
        let g = cycle(10);
        let mut s = AccessModelSession::new(&g, 0, stream_rng(2, 3)).unwrap();
        let mut forward = 0;
        for _ in 0..1000 {
            let u = s.current();
            if s.step() == (u + 1) % 10 {
                forward += 1;
            }
        }
        assert!((forward as f64 / 1000.0 - 0.5).abs() < 0.05);
    }
}
