//! Monte-Carlo protocols: the pattern-frequency distinguisher and the
//! one-agent versus two-agent tree protocols.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::datasets::{Theorem8Pair, TreeHubGraph};
use crate::error::WalkError;
use crate::graph::{AnchoredPattern, Graph, NodeId};
use crate::oracles::{is_incident_to_pattern, pattern_incidence_count};
use crate::rng::{stream_rng, substream};
use crate::walks::iddfs_traverse;

/// Runs `f` on `0..n` with at most `workers` threads; output order is the
/// index order regardless of scheduling.
pub fn par_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Output of one agent placed at each node: whether its explored
/// neighborhood shows it lies on a copy of the pattern.
pub fn agent_outputs(
    g: &Graph,
    p: &AnchoredPattern,
    workers: usize,
) -> Result<Vec<bool>, WalkError> {
    let r = p.max_eccentricity().max(1);
    par_map(g.node_count(), workers, |v| {
        let trace = iddfs_traverse(g, v, r)?;
        let (local, _) = trace.reconstruct()?;
        Ok(is_incident_to_pattern(&local, 0, p)?)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistinguisherReport {
    pub agents: usize,
    pub trials: usize,
    /// Fraction of nodes incident to the pattern in each graph.
    pub frequency_g1: f64,
    pub frequency_g2: f64,
    /// Vote count above which a graph is assigned to the denser class.
    pub threshold: f64,
    pub correct_g1: usize,
    pub correct_g2: usize,
    /// Fraction of trials classifying both graphs correctly.
    pub success_rate: f64,
}

/// `k` agents start at uniform random nodes; each votes whether its start
/// lies on a copy of `p`. A graph is assigned to the class with the higher
/// pattern frequency iff the vote count exceeds the midpoint frequency
/// times `k`.
pub fn frequency_distinguisher(
    g1: &Graph,
    g2: &Graph,
    p: &AnchoredPattern,
    k: usize,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<DistinguisherReport, WalkError> {
    let out1 = agent_outputs(g1, p, workers)?;
    let out2 = agent_outputs(g2, p, workers)?;
    distinguisher_from_outputs(g1, g2, p, &out1, &out2, k, trials, seed)
}

/// Same as [`frequency_distinguisher`] with precomputed agent outputs.
#[allow(clippy::too_many_arguments)]
pub fn distinguisher_from_outputs(
    g1: &Graph,
    g2: &Graph,
    p: &AnchoredPattern,
    out1: &[bool],
    out2: &[bool],
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<DistinguisherReport, WalkError> {
    if k == 0 || trials == 0 {
        return Err(WalkError::Invalid("need at least one agent and one trial".into()));
    }
    if g1.node_count() == 0 || g2.node_count() == 0 {
        return Err(WalkError::Invalid("graphs must be non-empty".into()));
    }
    let f1 = pattern_incidence_count(g1, p)? as f64 / g1.node_count() as f64;
    let f2 = pattern_incidence_count(g2, p)? as f64 / g2.node_count() as f64;
    if f1 == f2 {
        return Err(WalkError::Invalid(
            "the pattern is equally frequent in both graphs".into(),
        ));
    }
    let threshold = 0.5 * (f1 + f2) * k as f64;
    let g1_denser = f1 > f2;
    let says_g1 = |votes: usize| (votes as f64 > threshold) == g1_denser;
    let mut rng = stream_rng(seed, substream(0xd15, k as u64));
    let (mut c1, mut c2, mut both) = (0, 0, 0);
    for _ in 0..trials {
        let v1 = (0..k).filter(|_| out1[rng.gen_range(0..out1.len())]).count();
        let v2 = (0..k).filter(|_| out2[rng.gen_range(0..out2.len())]).count();
        let ok1 = says_g1(v1);
        let ok2 = !says_g1(v2);
        c1 += usize::from(ok1);
        c2 += usize::from(ok2);
        both += usize::from(ok1 && ok2);
    }
    Ok(DistinguisherReport {
        agents: k,
        trials,
        frequency_g1: f1,
        frequency_g2: f2,
        threshold,
        correct_g1: c1,
        correct_g2: c2,
        success_rate: both as f64 / trials as f64,
    })
}

/// Least-squares slope of `ln((failures + 0.5) / (trials + 1))` against `k`.
pub fn failure_decay_slope(ks: &[usize], failures: &[usize], trials: usize) -> f64 {
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = failures
        .iter()
        .map(|&f| ((f as f64 + 0.5) / (trials as f64 + 1.0)).ln())
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Walks "toward smaller feature" for `budget` moves: from symbol `s >= 2`
/// to a neighbor with symbol `s - 1`; from symbol 1 to the neighbor that is
/// not one level deeper; otherwise stays. Returns the visited path
/// including the start.
pub fn root_seek(g: &Graph, symbols: &[u32], start: NodeId, budget: usize) -> Vec<NodeId> {
    let mut path = Vec::with_capacity(budget + 1);
    path.push(start);
    let mut cur = start;
    for _ in 0..budget {
        let s = symbols[cur];
        let next = match s {
            0 => None,
            1 => g.neighbors(cur).iter().copied().find(|&w| symbols[w] != 2),
            _ => g.neighbors(cur).iter().copied().find(|&w| symbols[w] + 1 == s),
        };
        cur = next.unwrap_or(cur);
        path.push(cur);
    }
    path
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeProtocolReport {
    pub agents: usize,
    pub trials: usize,
    pub step_budget: usize,
    /// Fraction of trials in which `g1` (the graph with the separating
    /// structure) was recognized.
    pub success_g1: f64,
    /// Fraction of trials in which `g2` was recognized.
    pub success_g2: f64,
    /// Mean of the two.
    pub balanced: f64,
}

fn passed_attachment(side: &TreeHubGraph, depth: u32, path: &[NodeId]) -> Option<NodeId> {
    path.windows(2)
        .find(|w| side.levels[w[0]] == 1 && side.levels[w[1]] == depth)
        .map(|w| w[1])
}

/// Two agents seek the root; the graph is called `g1` iff both climbed out
/// of a secondary tree and their visited sets meet only at hubs.
fn two_agent_trial(side: &TreeHubGraph, h1: u32, budget: usize, rng: &mut impl Rng) -> bool {
    let n = side.graph.node_count();
    let paths: Vec<Vec<NodeId>> = (0..2)
        .map(|_| root_seek(&side.graph, &side.levels, rng.gen_range(0..n), budget))
        .collect();
    let all_climbed = paths.iter().all(|p| {
        passed_attachment(side, h1, p).is_some() && side.levels[*p.last().unwrap()] == 0
    });
    if !all_climbed {
        return false;
    }
    let a: BTreeSet<NodeId> = paths[0].iter().copied().collect();
    let b: BTreeSet<NodeId> = paths[1].iter().copied().collect();
    a.intersection(&b).all(|&v| side.levels[v] == 0)
}

/// One agent seeks the root, then explores the other primary trees of its
/// hub by DFS in random child order until the budget runs out. The graph
/// is called `g1` iff it saw two distinct attachment leaves.
fn one_agent_trial(side: &TreeHubGraph, h1: u32, budget: usize, rng: &mut impl Rng) -> bool {
    let g = &side.graph;
    let n = g.node_count();
    let start = rng.gen_range(0..n);
    let full = root_seek(g, &side.levels, start, budget);
    let Some(arrival) = full.iter().position(|&v| side.levels[v] == 0) else {
        return false;
    };
    let climb = &full[..=arrival];
    let mut found: BTreeSet<NodeId> = passed_attachment(side, h1, climb).into_iter().collect();
    let hub = climb[arrival];
    let own_root = arrival.checked_sub(1).map(|i| climb[i]);
    let mut left = budget - arrival;
    let mut roots: Vec<NodeId> = g
        .neighbors(hub)
        .iter()
        .copied()
        .filter(|&r| Some(r) != own_root)
        .collect();
    roots.shuffle(rng);
    let mut stack: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    'trees: for root in roots {
        if left == 0 {
            break;
        }
        left -= 1;
        stack.push((root, Vec::new()));
        let mut fresh = true;
        while let Some((u, _)) = stack.last() {
            let u = *u;
            if fresh {
                let level = side.levels[u];
                if level == h1 && g.neighbors(u).iter().any(|&w| side.levels[w] == 1) {
                    found.insert(u);
                    if found.len() >= 2 {
                        return true;
                    }
                }
                let mut kids: Vec<NodeId> = g
                    .neighbors(u)
                    .iter()
                    .copied()
                    .filter(|&w| side.levels[w] == level + 1)
                    .collect();
                kids.shuffle(rng);
                stack.last_mut().expect("nonempty").1 = kids;
            }
            let next = stack.last_mut().expect("nonempty").1.pop();
            if left == 0 {
                break 'trees;
            }
            left -= 1;
            match next {
                Some(w) => {
                    stack.push((w, Vec::new()));
                    fresh = true;
                }
                None => {
                    stack.pop();
                    fresh = false;
                }
            }
        }
    }
    found.len() >= 2
}

/// Recognition rates of the one- and two-agent protocols on both graphs.
pub fn theorem8_protocol(
    pair: &Theorem8Pair,
    agents: usize,
    step_budget: usize,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<TreeProtocolReport, WalkError> {
    if step_budget < pair.secondary_depth {
        return Err(WalkError::BudgetTooSmall {
            budget: step_budget,
            required: pair.secondary_depth,
        });
    }
    if !(1..=2).contains(&agents) {
        return Err(WalkError::Invalid(format!("protocol runs 1 or 2 agents, got {agents}")));
    }
    let h1 = pair.primary_depth as u32;
    let run = |side: &TreeHubGraph, tag: u64| -> usize {
        par_map(trials, workers, |t| {
            let mut rng = stream_rng(seed, substream(tag, t as u64));
            let says_g1 = if agents == 2 {
                two_agent_trial(side, h1, step_budget, &mut rng)
            } else {
                one_agent_trial(side, h1, step_budget, &mut rng)
            };
            usize::from(says_g1)
        })
        .into_iter()
        .sum()
    };
    let g1_calls = run(&pair.g1, 0x81 + agents as u64);
    let g2_calls = run(&pair.g2, 0x82 + 16 * agents as u64);
    let success_g1 = g1_calls as f64 / trials as f64;
    let success_g2 = 1.0 - g2_calls as f64 / trials as f64;
    Ok(TreeProtocolReport {
        agents,
        trials,
        step_budget,
        success_g1,
        success_g2,
        balanced: 0.5 * (success_g1 + success_g2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_ladder, gen_one_way_tree, gen_theorem8_pair, ladder, marked_cycle_pair, Crossing};
    use crate::graph::Graph;

    #[test]
    fn deterministic_separation() {
        let all: Vec<usize> = (0..15).collect();
        let crossed = ladder(15, &all).unwrap();
        let plain = ladder(15, &[]).unwrap();
        let r = frequency_distinguisher(&crossed, &plain, &AnchoredPattern::triangle(), 3, 200, 1, 1)
            .unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.frequency_g1, 1.0);
    }

    #[test]
    fn one_agent_on_two_components() {
        let (g1, g2) = marked_cycle_pair(5).unwrap();
        let single = Graph::new(1, &[], vec![1.0], 1).unwrap();
        let p = AnchoredPattern::new(single, 0).unwrap().with_feature_matching();
        let r = frequency_distinguisher(&g2, &g1, &p, 1, 2000, 3, 1).unwrap();
        assert!(r.success_rate <= 0.75, "{}", r.success_rate);
    }

    #[test]
    fn decay_slope_sign() {
        assert!(failure_decay_slope(&[1, 2, 4, 8], &[500, 250, 60, 3], 1000) < 0.0);
        assert!(failure_decay_slope(&[1, 2, 4], &[10, 10, 10], 1000).abs() < 1e-12);
    }

    #[test]
    fn ladder_votes_improve_with_agents() {
        let ds = gen_ladder(31, Crossing::Density(0.5), 1, 4).unwrap();
        let plain = &ds.items[0].graph;
        let crossed = &ds.items[1].graph;
        let p = AnchoredPattern::triangle();
        let one = frequency_distinguisher(crossed, plain, &p, 1, 1000, 2, 1).unwrap();
        let many = frequency_distinguisher(crossed, plain, &p, 16, 1000, 2, 1).unwrap();
        assert!(many.success_rate > one.success_rate);
    }

    #[test]
    fn root_seeking_in_one_way_tree() {
        let (t, g) = gen_one_way_tree(3, 5).unwrap();
        for v in 0..g.node_count() {
            let lvl = t.levels[v] as usize;
            let path = root_seek(&g, &t.levels, v, t.depth);
            assert_eq!(path[lvl - 1], t.root);
            assert!(path[lvl - 1..].iter().all(|&u| u == t.root));
        }
    }

    #[test]
    fn small_tree_protocols() {
        let pair = gen_theorem8_pair(6, 3, 6, 3, false).unwrap();
        let two = theorem8_protocol(&pair, 2, 9, 300, 5, 1).unwrap();
        assert_eq!(two.success_g2, 1.0);
        assert!(two.success_g1 > 0.6);
        let one = theorem8_protocol(&pair, 1, 18, 300, 5, 1).unwrap();
        assert_eq!(one.success_g2, 1.0);
        assert!(theorem8_protocol(&pair, 2, 5, 10, 5, 1).is_err());
    }

    #[test]
    fn workers_do_not_change_results() {
        let pair = gen_theorem8_pair(4, 3, 5, 3, false).unwrap();
        let a = theorem8_protocol(&pair, 1, 24, 200, 9, 1).unwrap();
        let b = theorem8_protocol(&pair, 1, 24, 200, 9, 3).unwrap();
        assert_eq!(a, b);
    }
}
