//! Color refinement (1-WL), small-graph isomorphism and canonical codes.

use std::collections::BTreeMap;

use crate::error::GraphError;
use crate::graph::{Graph, NodeId};

/// Size limit for the backtracking isomorphism test.
pub const MAX_ISO_NODES: usize = 24;

fn feature_key(g: &Graph, v: NodeId) -> Vec<u64> {
    g.features(v).iter().map(|x| x.to_bits()).collect()
}

/// Initial colors from node features, numbered in sorted feature order.
fn feature_colors(g: &Graph) -> Vec<u32> {
    let mut palette = BTreeMap::new();
    for v in 0..g.node_count() {
        palette.entry(feature_key(g, v)).or_insert(0u32);
    }
    for (i, id) in palette.values_mut().enumerate() {
        *id = i as u32;
    }
    (0..g.node_count())
        .map(|v| palette[&feature_key(g, v)])
        .collect()
}

/// Refines `colors` to the coarsest stable partition below it.
///
/// New color ids are assigned in sorted order of `(old color, sorted neighbor
/// colors)`, so the result depends only on the isomorphism type of the
/// colored graph, never on node numbering.
pub fn refine(g: &Graph, mut colors: Vec<u32>) -> Vec<u32> {
    let mut classes = count_distinct(&colors);
    loop {
        let keys: Vec<(u32, Vec<u32>)> = (0..g.node_count())
            .map(|v| {
                let mut nb: Vec<u32> = g.neighbors(v).iter().map(|&w| colors[w]).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let mut palette = BTreeMap::new();
        for k in &keys {
            palette.entry(k).or_insert(0u32);
        }
        for (i, id) in palette.values_mut().enumerate() {
            *id = i as u32;
        }
        let next: Vec<u32> = keys.iter().map(|k| palette[k]).collect();
        let next_classes = palette.len();
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn count_distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Stable 1-WL colors of several graphs in one shared palette.
pub fn color_refinement(graphs: &[&Graph]) -> Result<Vec<Vec<u32>>, GraphError> {
    let Some(first) = graphs.first() else {
        return Ok(Vec::new());
    };
    let mut union = (*first).clone();
    for g in &graphs[1..] {
        union = union.disjoint_union(g)?;
    }
    let colors = refine(&union, feature_colors(&union));
    let mut out = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for g in graphs {
        out.push(colors[offset..offset + g.node_count()].to_vec());
        offset += g.node_count();
    }
    Ok(out)
}

/// Whether 1-WL color refinement fails to tell the two graphs apart.
pub fn wl_indistinguishable(g1: &Graph, g2: &Graph) -> Result<bool, GraphError> {
    if g1.node_count() != g2.node_count() || g1.feature_dim() != g2.feature_dim() {
        return Ok(false);
    }
    let colors = color_refinement(&[g1, g2])?;
    let mut a = colors[0].clone();
    let mut b = colors[1].clone();
    a.sort_unstable();
    b.sort_unstable();
    Ok(a == b)
}

/// Feature-preserving isomorphism test by backtracking, for graphs of at
/// most [`MAX_ISO_NODES`] nodes.
pub fn is_isomorphic_small(g1: &Graph, g2: &Graph) -> Result<bool, GraphError> {
    for g in [g1, g2] {
        if g.node_count() > MAX_ISO_NODES {
            return Err(GraphError::TooLarge {
                size: g.node_count(),
                limit: MAX_ISO_NODES,
            });
        }
    }
    if g1.node_count() != g2.node_count()
        || g1.edge_count() != g2.edge_count()
        || g1.feature_dim() != g2.feature_dim()
        || g1.degree_sequence() != g2.degree_sequence()
    {
        return Ok(false);
    }
    if g1.node_count() == 0 {
        return Ok(true);
    }
    let colors = color_refinement(&[g1, g2])?;
    let (c1, c2) = (&colors[0], &colors[1]);
    let mut h1 = c1.clone();
    let mut h2 = c2.clone();
    h1.sort_unstable();
    h2.sort_unstable();
    if h1 != h2 {
        return Ok(false);
    }

    // Match nodes of g1 in an order where each node (after the first of its
    // component) is adjacent to something already placed.
    let n = g1.node_count();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !placed[v])
            .min_by_key(|&v| (h1.iter().filter(|&&c| c == c1[v]).count(), v))
            .expect("unplaced node exists");
        placed[seed] = true;
        order.push(seed);
        let mut i = order.len() - 1;
        while i < order.len() {
            let u = order[i];
            i += 1;
            for &w in g1.neighbors(u) {
                if !placed[w] {
                    placed[w] = true;
                    order.push(w);
                }
            }
        }
    }
    let mut image = vec![usize::MAX; n];
    let mut used = vec![false; n];
    Ok(match_from(g1, g2, c1, c2, &order, 0, &mut image, &mut used))
}

#[allow(clippy::too_many_arguments)]
fn match_from(
    g1: &Graph,
    g2: &Graph,
    c1: &[u32],
    c2: &[u32],
    order: &[NodeId],
    depth: usize,
    image: &mut [NodeId],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let u = order[depth];
    for cand in 0..g2.node_count() {
        if used[cand] || c2[cand] != c1[u] {
            continue;
        }
        let ok = order[..depth]
            .iter()
            .all(|&prev| g1.has_edge(u, prev) == g2.has_edge(cand, image[prev]));
        if ok {
            image[u] = cand;
            used[cand] = true;
            if match_from(g1, g2, c1, c2, order, depth + 1, image, used) {
                return true;
            }
            used[cand] = false;
            image[u] = usize::MAX;
        }
    }
    false
}

/// Canonical byte code of a feature-labeled graph: two graphs receive the
/// same code iff they are isomorphic (features included).
///
/// Components are coded separately and sorted. Within a component this is
/// individualization-refinement, pruned only across twin vertices; it is
/// meant for neighborhoods of a few dozen nodes.
pub fn canonical_code(g: &Graph) -> Vec<u8> {
    let components = g.connected_components();
    if components.len() <= 1 {
        let mut out = vec![0u8];
        out.extend(connected_code(g));
        return out;
    }
    let mut codes: Vec<Vec<u8>> = components
        .iter()
        .map(|c| connected_code(&g.induced_subgraph(c)))
        .collect();
    codes.sort();
    let mut out = vec![1u8];
    out.extend_from_slice(&(codes.len() as u32).to_le_bytes());
    for c in codes {
        out.extend_from_slice(&(c.len() as u32).to_le_bytes());
        out.extend(c);
    }
    out
}

fn connected_code(g: &Graph) -> Vec<u8> {
    let colors = refine(g, feature_colors(g));
    let mut best: Option<Vec<u8>> = None;
    search_leaves(g, colors, &mut best);
    best.unwrap_or_else(|| encode(g, &[]))
}

/// Same color and the same neighbors apart from each other: swapping the
/// two is an automorphism of the colored graph.
fn twins(g: &Graph, u: NodeId, w: NodeId) -> bool {
    let a = g.neighbors(u).iter().filter(|&&x| x != w);
    let b = g.neighbors(w).iter().filter(|&&x| x != u);
    g.degree(u) == g.degree(w) && a.eq(b)
}

fn search_leaves(g: &Graph, colors: Vec<u32>, best: &mut Option<Vec<u8>>) {
    let n = g.node_count();
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in &colors {
        *sizes.entry(c).or_default() += 1;
    }
    let target = sizes.iter().find(|(_, &s)| s > 1).map(|(&c, _)| c);
    match target {
        None => {
            let mut order: Vec<NodeId> = (0..n).collect();
            order.sort_by_key(|&v| colors[v]);
            let code = encode(g, &order);
            if best.as_ref().is_none_or(|b| code > *b) {
                *best = Some(code);
            }
        }
        Some(cell) => {
            let mut tried: Vec<NodeId> = Vec::new();
            for v in (0..n).filter(|&v| colors[v] == cell) {
                if tried.iter().any(|&u| twins(g, u, v)) {
                    continue;
                }
                tried.push(v);
                let split: Vec<u32> = colors
                    .iter()
                    .enumerate()
                    .map(|(u, &c)| 2 * c + u32::from(u != v))
                    .collect();
                search_leaves(g, refine(g, split), best);
            }
        }
    }
}

fn encode(g: &Graph, order: &[NodeId]) -> Vec<u8> {
    let n = order.len();
    let mut pos = vec![0usize; g.node_count()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(g.feature_dim() as u32).to_le_bytes());
    for &v in order {
        for x in g.features(v) {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }
    let mut bits = vec![0u8; (n * n).div_ceil(8)];
    for &v in order {
        for &w in g.neighbors(v) {
            let idx = pos[v] * n + pos[w];
            bits[idx / 8] |= 1 << (idx % 8);
        }
    }
    out.extend_from_slice(&bits);
    out
}
