//! Seeded generators for the synthetic graph families.
//!
//! Every generator is a pure function of its arguments: the same parameters
//! and seed give bit-identical datasets.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{Graph, NodeId};
use crate::rng::{stream_rng, StreamRng};

/// Upper bound on generated tree sizes.
pub const MAX_GENERATED_NODES: usize = 1_000_000;

/// Skip lengths of the ten circular-skip-link classes.
pub const CSL_SKIPS: [usize; 10] = [2, 3, 4, 5, 6, 9, 11, 12, 13, 16];
pub const CSL_NODES: usize = 41;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: usize,
    /// Items sharing a group (e.g. a matched pair) never straddle a split.
    #[serde(default)]
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub class_count: usize,
    pub generator_seed: u64,
    pub items: Vec<LabeledGraph>,
}

impl LabeledDataset {
    pub fn validate(&self) -> Result<(), GraphError> {
        let dim = self.items.first().map(|i| i.graph.feature_dim());
        for item in &self.items {
            if item.label >= self.class_count {
                return Err(GraphError::InvalidArgument(format!(
                    "label {} out of range for {} classes",
                    item.label, self.class_count
                )));
            }
            if Some(item.graph.feature_dim()) != dim {
                return Err(GraphError::FeatureDimension {
                    expected: dim.unwrap_or(0),
                    found: item.graph.feature_dim(),
                });
            }
            item.graph.validate()?;
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.items.first().map_or(1, |i| i.graph.feature_dim())
    }

    pub fn mean_node_count(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().map(|i| i.graph.node_count() as f64).sum::<f64>()
            / self.items.len() as f64
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let ds: LabeledDataset = serde_json::from_str(s)?;
        ds.validate()?;
        Ok(ds)
    }
}

fn random_relabel(g: &Graph, rng: &mut StreamRng) -> Graph {
    let mut perm: Vec<NodeId> = (0..g.node_count()).collect();
    perm.shuffle(rng);
    g.permuted(&perm)
}

/// Disjoint union of cycles with the given lengths, uniform features.
pub fn cycle_union(lengths: &[usize]) -> Graph {
    let mut edges = Vec::new();
    let mut offset = 0;
    for &len in lengths {
        edges.extend((0..len).map(|i| (offset + i, offset + (i + 1) % len)));
        offset += len;
    }
    Graph::with_uniform_features(offset, &edges).expect("cycle union is simple for lengths >= 3")
}

/// Partitions of 16 into cycle lengths >= 4 that contain a 4-cycle.
pub const FOUR_CYCLE_POSITIVE: [&[usize]; 5] =
    [&[4, 12], &[4, 4, 8], &[4, 4, 4, 4], &[4, 5, 7], &[4, 6, 6]];
/// Partitions of 16 into cycle lengths >= 5.
pub const FOUR_CYCLE_NEGATIVE: [&[usize]; 6] =
    [&[16], &[5, 11], &[6, 10], &[7, 9], &[8, 8], &[5, 5, 6]];

/// Balanced 4-cycle detection dataset of 16-node 2-regular graphs.
///
/// Items come in matched pairs `(positive, negative)` sharing a group id.
/// All graphs are disjoint unions of cycles, so every pair has the same
/// degree sequence and 1-WL cannot separate them.
pub fn gen_four_cycles(count: usize, seed: u64) -> Result<LabeledDataset, GraphError> {
    if !count.is_multiple_of(2) {
        return Err(GraphError::InvalidArgument(format!(
            "four-cycles count must be even, got {count}"
        )));
    }
    let mut rng = stream_rng(seed, 0x4c);
    let mut items = Vec::with_capacity(count);
    for pair in 0..count / 2 {
        let pos = FOUR_CYCLE_POSITIVE[rng.gen_range(0..FOUR_CYCLE_POSITIVE.len())];
        let neg = FOUR_CYCLE_NEGATIVE[rng.gen_range(0..FOUR_CYCLE_NEGATIVE.len())];
        for (lengths, label) in [(pos, 1), (neg, 0)] {
            let graph = random_relabel(&cycle_union(lengths), &mut rng);
            items.push(LabeledGraph {
                graph,
                label,
                group: pair,
            });
        }
    }
    Ok(LabeledDataset {
        name: "four-cycles".into(),
        class_count: 2,
        generator_seed: seed,
        items,
    })
}

/// The 41-node cycle with skip links `{i, i + skip}`.
pub fn csl_graph(skip: usize) -> Graph {
    let n = CSL_NODES;
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend((0..n).map(|i| (i, (i + skip) % n)));
    let mut norm: Vec<_> = edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
    norm.sort_unstable();
    norm.dedup();
    Graph::with_uniform_features(n, &norm).expect("csl graph is simple")
}

/// Circular skip links with the default 15 relabeled graphs per class.
pub fn gen_csl(seed: u64) -> LabeledDataset {
    gen_csl_sized(15, seed)
}

pub fn gen_csl_sized(per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = stream_rng(seed, 0xc5);
    let mut items = Vec::with_capacity(per_class * CSL_SKIPS.len());
    for copy in 0..per_class {
        for (class, &skip) in CSL_SKIPS.iter().enumerate() {
            items.push(LabeledGraph {
                graph: random_relabel(&csl_graph(skip), &mut rng),
                label: class,
                group: copy * CSL_SKIPS.len() + class,
            });
        }
    }
    LabeledDataset {
        name: "csl".into(),
        class_count: CSL_SKIPS.len(),
        generator_seed: seed,
        items,
    }
}

/// Rook's 4x4 graph: grid cells adjacent iff they share a row or a column.
pub fn rook_4x4() -> Graph {
    let mut edges = Vec::new();
    for u in 0..16 {
        for v in u + 1..16 {
            if u / 4 == v / 4 || u % 4 == v % 4 {
                edges.push((u, v));
            }
        }
    }
    Graph::with_uniform_features(16, &edges).expect("rook graph")
}

/// Shrikhande graph: Cayley graph of Z4 x Z4 with connection set
/// `{±(1,0), ±(0,1), ±(1,1)}`.
pub fn shrikhande() -> Graph {
    let id = |a: usize, b: usize| (a % 4) * 4 + (b % 4);
    let mut edges = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            let u = id(a, b);
            for (da, db) in [(1, 0), (0, 1), (1, 1)] {
                let v = id(a + da, b + db);
                edges.push((u.min(v), u.max(v)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Graph::with_uniform_features(16, &edges).expect("shrikhande graph")
}

/// The two-graph dataset `{Rook 4x4 (class 1), Shrikhande (class 0)}`.
pub fn gen_two_wl_pair() -> LabeledDataset {
    LabeledDataset {
        name: "two-wl".into(),
        class_count: 2,
        generator_seed: 0,
        items: vec![
            LabeledGraph {
                graph: rook_4x4(),
                label: 1,
                group: 0,
            },
            LabeledGraph {
                graph: shrikhande(),
                label: 0,
                group: 1,
            },
        ],
    }
}

/// How many ladder cells get crossed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    /// A fraction of the cells, randomly rounded to a whole count.
    Density(f64),
    /// Exactly this many cells, at any ladder size.
    Fixed(usize),
}

/// A `2 x (cells + 1)` ladder; listed cells get both diagonals.
///
/// Top rail nodes are `0..=cells`, bottom rail `cells+1..=2*cells+1`; cell
/// `j` spans columns `j` and `j + 1`.
pub fn ladder(cells: usize, crossed: &[usize]) -> Result<Graph, GraphError> {
    if cells < 1 {
        return Err(GraphError::InvalidArgument("ladder needs a cell".into()));
    }
    let top = |i: usize| i;
    let bot = |i: usize| cells + 1 + i;
    let mut edges = Vec::new();
    for i in 0..=cells {
        edges.push((top(i), bot(i)));
    }
    for i in 0..cells {
        edges.push((top(i), top(i + 1)));
        edges.push((bot(i), bot(i + 1)));
    }
    for &j in crossed {
        if j >= cells {
            return Err(GraphError::InvalidArgument(format!(
                "cell {j} out of range for {cells} cells"
            )));
        }
        edges.push((top(j), bot(j + 1)));
        edges.push((top(j + 1), bot(j)));
    }
    Graph::with_uniform_features(2 * (cells + 1), &edges)
}

/// Number of crossed cells for one crossed ladder.
pub fn crossed_count(cells: usize, mode: Crossing, rng: &mut impl Rng) -> Result<usize, GraphError> {
    match mode {
        Crossing::Fixed(k) if k > cells => Err(GraphError::InvalidArgument(format!(
            "{k} crossed cells requested but the ladder has {cells}"
        ))),
        Crossing::Fixed(k) => Ok(k),
        Crossing::Density(d) if !(0.0..=1.0).contains(&d) => Err(GraphError::InvalidArgument(
            format!("crossing density {d} outside [0, 1]"),
        )),
        Crossing::Density(d) => {
            let target = cells as f64 * d;
            let floor = target.floor();
            let extra = rng.gen_bool((target - floor).clamp(0.0, 1.0));
            Ok((floor as usize + usize::from(extra)).min(cells))
        }
    }
}

/// Plain (class 0) versus partially crossed (class 1) ladders, in pairs.
pub fn gen_ladder(
    cells: usize,
    mode: Crossing,
    pairs: usize,
    seed: u64,
) -> Result<LabeledDataset, GraphError> {
    if cells < 2 {
        return Err(GraphError::InvalidArgument(format!(
            "ladder needs at least 2 cells, got {cells}"
        )));
    }
    let mut rng = stream_rng(seed, 0x1add);
    let plain = ladder(cells, &[])?;
    let mut items = Vec::with_capacity(2 * pairs);
    for pair in 0..pairs {
        let k = crossed_count(cells, mode, &mut rng)?;
        let mut all: Vec<usize> = (0..cells).collect();
        all.shuffle(&mut rng);
        let crossed = ladder(cells, &all[..k])?;
        items.push(LabeledGraph {
            graph: random_relabel(&plain, &mut rng),
            label: 0,
            group: pair,
        });
        items.push(LabeledGraph {
            graph: random_relabel(&crossed, &mut rng),
            label: 1,
            group: pair,
        });
    }
    Ok(LabeledDataset {
        name: format!("ladder-{}", 2 * (cells + 1)),
        class_count: 2,
        generator_seed: seed,
        items,
    })
}

/// Number of nodes of a complete tree with `depth` levels.
pub fn tree_size(branching: usize, depth: usize) -> usize {
    (0..depth).map(|i| branching.pow(i as u32)).sum()
}

/// A complete `branching`-ary tree whose level-`i` nodes carry feature `i`.
///
/// Levels run `1..=depth`; the root is level 1 and leaves are level `depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneWayTree {
    pub branching: usize,
    pub depth: usize,
    pub root: NodeId,
    pub leaves: Vec<NodeId>,
    pub levels: Vec<u32>,
}

/// Appends a one-way tree to an edge list; returns `(root, leaves)`.
fn append_tree(
    edges: &mut Vec<(NodeId, NodeId)>,
    levels: &mut Vec<u32>,
    branching: usize,
    depth: usize,
) -> (NodeId, Vec<NodeId>) {
    let root = levels.len();
    levels.push(1);
    let mut frontier = vec![root];
    for level in 2..=depth {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for &parent in &frontier {
            for _ in 0..branching {
                let child = levels.len();
                levels.push(level as u32);
                edges.push((parent, child));
                next.push(child);
            }
        }
        frontier = next;
    }
    (root, frontier)
}

pub fn gen_one_way_tree(branching: usize, depth: usize) -> Result<(OneWayTree, Graph), GraphError> {
    if branching < 2 || depth < 1 {
        return Err(GraphError::InvalidArgument(format!(
            "one-way tree needs branching >= 2 and depth >= 1, got {branching}, {depth}"
        )));
    }
    let size = checked_tree_size(branching, depth)?;
    let mut edges = Vec::with_capacity(size);
    let mut levels = Vec::with_capacity(size);
    let (root, leaves) = append_tree(&mut edges, &mut levels, branching, depth);
    let features = levels.iter().map(|&l| f64::from(l)).collect();
    let graph = Graph::new(levels.len(), &edges, features, 1)?;
    Ok((
        OneWayTree {
            branching,
            depth,
            root,
            leaves,
            levels,
        },
        graph,
    ))
}

fn checked_tree_size(branching: usize, depth: usize) -> Result<usize, GraphError> {
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..depth {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(branching);
        if total > MAX_GENERATED_NODES {
            return Err(GraphError::TooLarge {
                size: total,
                limit: MAX_GENERATED_NODES,
            });
        }
    }
    Ok(total)
}

/// One graph of the two-agents-beat-one construction, with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeHubGraph {
    pub graph: Graph,
    /// Symbol of every node: 0 at hubs, tree level otherwise, `h + 1`
    /// on padding nodes.
    pub levels: Vec<u32>,
    pub hubs: Vec<NodeId>,
    pub primary_roots: Vec<NodeId>,
    /// Primary-tree leaves that carry a secondary tree.
    pub attachment_leaves: Vec<NodeId>,
    pub secondary_roots: Vec<NodeId>,
}

/// The pair used to show that two agents can beat one.
///
/// `g1` contains the separating path (secondary trees on every primary
/// tree); `g2` does not.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem8Pair {
    pub g1: TreeHubGraph,
    pub g2: TreeHubGraph,
    pub trees: usize,
    pub primary_depth: usize,
    pub secondary_depth: usize,
    pub branching: usize,
    pub equalized: bool,
}

impl Theorem8Pair {
    /// Size of the symbol alphabet used for one-hot features.
    pub fn alphabet(&self) -> usize {
        self.primary_depth.max(self.secondary_depth) + 2
    }

    /// Both graphs with one-hot symbol features; `g1` is class 1.
    pub fn to_dataset(&self, generator_seed: u64) -> Result<LabeledDataset, GraphError> {
        let d = self.alphabet();
        let encode = |t: &TreeHubGraph| {
            let mut features = vec![0.0; t.levels.len() * d];
            for (v, &l) in t.levels.iter().enumerate() {
                features[v * d + l as usize] = 1.0;
            }
            Graph::new(t.levels.len(), &t.graph.edges(), features, d)
        };
        Ok(LabeledDataset {
            name: "tree-hub".into(),
            class_count: 2,
            generator_seed,
            items: vec![
                LabeledGraph { graph: encode(&self.g1)?, label: 1, group: 0 },
                LabeledGraph { graph: encode(&self.g2)?, label: 0, group: 0 },
            ],
        })
    }
}

struct HubBuilder {
    edges: Vec<(NodeId, NodeId)>,
    levels: Vec<u32>,
    hubs: Vec<NodeId>,
    primary_roots: Vec<NodeId>,
    attachment_leaves: Vec<NodeId>,
    secondary_roots: Vec<NodeId>,
}

impl HubBuilder {
    fn new() -> Self {
        HubBuilder {
            edges: Vec::new(),
            levels: Vec::new(),
            hubs: Vec::new(),
            primary_roots: Vec::new(),
            attachment_leaves: Vec::new(),
            secondary_roots: Vec::new(),
        }
    }

    /// Adds one hub with `b` primary trees; the first `with_secondary` of
    /// them get a secondary tree on their first leaf.
    fn add_component(&mut self, b: usize, h1: usize, h2: usize, branching: usize, with_secondary: usize) {
        let hub = self.levels.len();
        self.levels.push(0);
        self.hubs.push(hub);
        for tree in 0..b {
            let (root, leaves) = append_tree(&mut self.edges, &mut self.levels, branching, h1);
            self.edges.push((hub, root));
            self.primary_roots.push(root);
            if tree < with_secondary {
                let leaf = leaves[0];
                let (sroot, _) = append_tree(&mut self.edges, &mut self.levels, branching, h2);
                self.edges.push((leaf, sroot));
                self.attachment_leaves.push(leaf);
                self.secondary_roots.push(sroot);
            }
        }
    }

    fn add_padding_path(&mut self, len: usize, symbol: u32) {
        let start = self.levels.len();
        for i in 0..len {
            self.levels.push(symbol);
            if i > 0 {
                self.edges.push((start + i - 1, start + i));
            }
        }
    }

    fn finish(self, alphabet: usize) -> Result<TreeHubGraph, GraphError> {
        let n = self.levels.len();
        let mut features = vec![0.0; n * alphabet];
        for (v, &l) in self.levels.iter().enumerate() {
            features[v * alphabet + l as usize] = 1.0;
        }
        Ok(TreeHubGraph {
            graph: Graph::new(n, &self.edges, features, alphabet)?,
            levels: self.levels,
            hubs: self.hubs,
            primary_roots: self.primary_roots,
            attachment_leaves: self.attachment_leaves,
            secondary_roots: self.secondary_roots,
        })
    }
}

/// Hub + `b` primary one-way trees of depth `h1`; secondary trees of depth
/// `h2` hang off one leaf of every primary tree in `g1` but of only one
/// primary tree in `g2`.
///
/// With `equalized`, both graphs are padded to the same node count: `g1`
/// becomes the all-secondary graph plus a padding path of
/// `(b - 1) * (1 + b * T(h1))` nodes and `g2` becomes `b` disjoint copies
/// of the single-secondary graph.
pub fn gen_theorem8_pair(
    b: usize,
    h1: usize,
    h2: usize,
    branching: usize,
    equalized: bool,
) -> Result<Theorem8Pair, GraphError> {
    if b < 2 || h1 < 3 || h2 <= h1 || branching < 2 {
        return Err(GraphError::InvalidArgument(format!(
            "need b >= 2, h2 > h1 >= 3 and branching >= 2; got b={b}, h1={h1}, h2={h2}, branching={branching}"
        )));
    }
    let t1 = checked_tree_size(branching, h1)?;
    let t2 = checked_tree_size(branching, h2)?;
    let single = 1 + b * t1 + t2;
    let total = if equalized { b * single } else { 1 + b * (t1 + t2) };
    if total > MAX_GENERATED_NODES {
        return Err(GraphError::TooLarge {
            size: total,
            limit: MAX_GENERATED_NODES,
        });
    }
    let alphabet = h1.max(h2) + 2;
    let mut first = HubBuilder::new();
    first.add_component(b, h1, h2, branching, b);
    let mut second = HubBuilder::new();
    if equalized {
        first.add_padding_path((b - 1) * (1 + b * t1), (alphabet - 1) as u32);
        for _ in 0..b {
            second.add_component(b, h1, h2, branching, 1);
        }
    } else {
        second.add_component(b, h1, h2, branching, 1);
    }
    Ok(Theorem8Pair {
        g1: first.finish(alphabet)?,
        g2: second.finish(alphabet)?,
        trees: b,
        primary_depth: h1,
        secondary_depth: h2,
        branching,
        equalized,
    })
}

/// Random simple graph: each pair, in random order, becomes an edge with
/// probability `p` unless an endpoint already has `max_degree` neighbors.
pub fn gen_random_bounded_degree(
    n: usize,
    max_degree: usize,
    p: f64,
    rng: &mut impl Rng,
) -> Graph {
    let mut pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    pairs.shuffle(rng);
    let mut deg = vec![0; n];
    let mut edges = Vec::new();
    for (u, v) in pairs {
        if deg[u] < max_degree && deg[v] < max_degree && rng.gen_bool(p) {
            deg[u] += 1;
            deg[v] += 1;
            edges.push((u, v));
        }
    }
    Graph::with_uniform_features(n, &edges).expect("pairs are distinct")
}

/// The clique-lower-bound gadgets: a triangle plus a pendant path at `v`
/// versus three pendant paths of length 2. Node 0 is `v` in both.
pub fn gen_lemma4_pair() -> (Graph, Graph) {
    // v=0, v1=1, v2=2, v3=3, v3'=4 (, v1'=5, v2'=6 in G2)
    let g1 = Graph::with_uniform_features(5, &[(0, 1), (0, 2), (0, 3), (1, 2), (3, 4)])
        .expect("triangle gadget");
    let g2 = Graph::with_uniform_features(
        7,
        &[(0, 1), (0, 2), (0, 3), (1, 5), (2, 6), (3, 4)],
    )
    .expect("path gadget");
    (g1, g2)
}

/// The clique gadgets as a two-graph dataset; the triangle side is class 1.
pub fn gen_lemma4_dataset() -> LabeledDataset {
    let (g1, g2) = gen_lemma4_pair();
    LabeledDataset {
        name: "clique-gadgets".into(),
        class_count: 2,
        generator_seed: 0,
        items: vec![
            LabeledGraph { graph: g1, label: 1, group: 0 },
            LabeledGraph { graph: g2, label: 0, group: 0 },
        ],
    }
}

/// Two identical cycles; the second carries feature 1 in `g2`, 0 elsewhere.
pub fn marked_cycle_pair(component_len: usize) -> Result<(Graph, Graph), GraphError> {
    if component_len < 3 {
        return Err(GraphError::InvalidArgument("components need 3+ nodes".into()));
    }
    let base = cycle_union(&[component_len, component_len]);
    let edges = base.edges();
    let n = base.node_count();
    let g1 = Graph::new(n, &edges, vec![0.0; n], 1)?;
    let f2 = (0..n).map(|v| if v < component_len { 0.0 } else { 1.0 }).collect();
    let g2 = Graph::new(n, &edges, f2, 1)?;
    Ok((g1, g2))
}
