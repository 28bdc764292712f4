use agentnet_autodiff::Tape;
use agentnet_core::checks::rollout_grad_check;
use agentnet_core::{
    Ablations, AgentNet, KeyedNoise, ModelConfig, NoiseSource, RolloutOptions, SeededNoise, Variant,
};
use agentnet_graph::datasets::{cycle_union, gen_random_bounded_degree, rook_4x4, shrikhande};
use agentnet_graph::Graph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARIANTS: [Variant; 3] = [Variant::Full, Variant::Simplified, Variant::RandomWalk];

fn model(variant: Variant, k: usize, steps: usize, h: usize, seed: u64) -> AgentNet<f64> {
    AgentNet::new(ModelConfig::new(variant, k, steps, h, 2), seed).unwrap()
}

/// Moves every parameter off its initial value so that no block is an identity.
fn perturb(m: &mut AgentNet<f64>, seed: u64, size: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in m.store.iter_mut() {
        p.values.iter_mut().for_each(|v| *v += rng.gen_range(-size..size));
    }
}

fn logits(m: &AgentNet<f64>, graphs: &[&Graph], noise: &mut dyn NoiseSource) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = m.store.bind(&mut tape);
    let r = m.rollout(&mut tape, &bound, graphs, noise, RolloutOptions::default()).unwrap();
    tape.value(r.logits).to_vec()
}

fn random_graph(n: usize, seed: u64) -> Graph {
    gen_random_bounded_degree(n, 4, 0.4, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol * x.abs().max(1.0), "{a:?} vs {b:?}");
    }
}

/// Keyed noise seen through an agent permutation and a node relabeling.
struct Mapped<'a> {
    inner: KeyedNoise,
    agent: &'a [usize],
    node: &'a [usize],
    node_inv: &'a [usize],
}

impl NoiseSource for Mapped<'_> {
    fn placement(&mut self, graph: usize, agent: usize, nodes: usize) -> usize {
        self.node[self.inner.placement(graph, self.agent[agent], nodes)]
    }

    fn gumbel(&mut self, graph: usize, agent: usize, step: usize, node: usize) -> f64 {
        self.inner.gumbel(graph, self.agent[agent], step, self.node_inv[node])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moves_stay_in_the_closed_neighborhood(seed in 0u64..1000, n in 1usize..12, v in 0usize..3) {
        let g = random_graph(n, seed);
        let m = model(VARIANTS[v], 3, 6, 8, seed);
        let mut tape = Tape::new();
        let bound = m.store.bind(&mut tape);
        let r = m
            .rollout(&mut tape, &bound, &[&g, &g], &mut SeededNoise::new(seed, 9), RolloutOptions::default())
            .unwrap();
        for w in r.positions.windows(2) {
            for (i, (&from, &to)) in w[0].iter().zip(&w[1]).enumerate() {
                prop_assert!(from == to || g.has_edge(from, to), "agent {i} jumped {from} -> {to}");
                if VARIANTS[v] == Variant::RandomWalk && g.degree(from) > 0 {
                    prop_assert_ne!(from, to);
                }
            }
        }
        for visits in &r.visits {
            prop_assert_eq!(visits.iter().sum::<u32>(), 3 * 7);
        }
    }
}

#[test]
fn start_placement_is_uniform() {
    let g = cycle_union(&[4]);
    let m = model(Variant::Full, 1, 1, 2, 0);
    let graphs = vec![&g; 10_000];
    let mut tape = Tape::new();
    let bound = m.store.bind(&mut tape);
    let r = m
        .rollout(&mut tape, &bound, &graphs, &mut SeededNoise::new(3, 4), RolloutOptions::default())
        .unwrap();
    let mut hist = [0usize; 4];
    for &p in &r.positions[0] {
        hist[p] += 1;
    }
    let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
    for c in hist {
        assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{hist:?}");
    }
}

#[test]
fn permuting_agents_leaves_logits_unchanged() {
    let g = random_graph(9, 1);
    let ident: Vec<usize> = (0..9).collect();
    for v in VARIANTS {
        let mut m = model(v, 5, 5, 8, 2);
        perturb(&mut m, 3, 0.3);
        let sigma = [3, 0, 4, 1, 2];
        let base = logits(&m, &[&g], &mut KeyedNoise { seed: 5 });
        let start = m.start_param();
        let rows = m.store.get(start).values.clone();
        let h = 8;
        let permuted: Vec<f64> = sigma.iter().flat_map(|&s| rows[s * h..(s + 1) * h].to_vec()).collect();
        m.store.get_mut(start).values = permuted;
        let mut noise = Mapped {
            inner: KeyedNoise { seed: 5 },
            agent: &sigma,
            node: &ident,
            node_inv: &ident,
        };
        assert_close(&base, &logits(&m, &[&g], &mut noise), 1e-12);
    }
}

#[test]
fn relabeling_nodes_leaves_logits_unchanged() {
    let g = random_graph(10, 4);
    let perm = [7, 2, 9, 0, 5, 1, 8, 3, 6, 4];
    let mut inv = [0; 10];
    for (u, &p) in perm.iter().enumerate() {
        inv[p] = u;
    }
    let relabeled = g.permuted(&perm);
    let agents: Vec<usize> = (0..4).collect();
    for v in VARIANTS {
        let mut m = model(v, 4, 6, 8, 6);
        perturb(&mut m, 7, 0.3);
        let base = logits(&m, &[&g], &mut KeyedNoise { seed: 8 });
        let mut noise = Mapped {
            inner: KeyedNoise { seed: 8 },
            agent: &agents,
            node: &perm,
            node_inv: &inv,
        };
        assert_close(&base, &logits(&m, &[&relabeled], &mut noise), 1e-12);
    }
}

#[test]
fn zeroed_block_outputs_make_logits_ignore_the_graph() {
    for v in VARIANTS {
        let mut m = model(v, 3, 4, 8, 9);
        perturb(&mut m, 10, 0.3);
        for id in m.block_output_params() {
            m.store.get_mut(id).values.iter_mut().for_each(|x| *x = 0.0);
        }
        let a = logits(&m, &[&random_graph(7, 1)], &mut SeededNoise::new(1, 1));
        let b = logits(&m, &[&cycle_union(&[5, 6])], &mut SeededNoise::new(2, 2));
        assert_eq!(a, b);
        assert!(a.iter().any(|&x| x != 0.0));
    }
}

#[test]
fn rollout_gradients_match_finite_differences() {
    for seed in 0..6 {
        for v in [Variant::Full, Variant::Simplified] {
            let check = rollout_grad_check(v, seed).unwrap();
            assert!(check.report.max_rel_error < 1e-4, "{v:?} seed {seed}: {:?}", check.report);
            assert!(check.report.checked > 10 * check.report.excluded.len().max(1));
            assert!(check.policy_params_without_gradient.is_empty(), "{check:?}");
        }
    }
}

#[test]
fn hard_straight_through_reaches_the_policy() {
    let g = cycle_union(&[3, 5]);
    let mut m = model(Variant::Full, 2, 3, 4, 14);
    perturb(&mut m, 15, 0.5);
    let mut tape = Tape::new();
    let bound = m.store.bind(&mut tape);
    let r = m
        .rollout(&mut tape, &bound, &[&g], &mut SeededNoise::new(1, 1), RolloutOptions::default())
        .unwrap();
    let loss = tape.cross_entropy(r.logits, &[1]).unwrap();
    let grads = tape.backward(loss).unwrap();
    for id in m.policy_params() {
        assert!(grads.get(bound.var(id)).unwrap().iter().any(|&x| x != 0.0));
    }
}

#[test]
fn fresh_policies_walk_to_unexplored_nodes() {
    let g = cycle_union(&[9]);
    for v in [Variant::Full, Variant::Simplified] {
        let m = model(v, 2, 8, 8, 16);
        let mut tape = Tape::new();
        let bound = m.store.bind(&mut tape);
        let opts = RolloutOptions {
            relaxed: false,
            greedy: true,
        };
        let r = m.rollout(&mut tape, &bound, &[&g], &mut SeededNoise::new(1, 2), opts).unwrap();
        for agent in 0..2 {
            let mut path: Vec<usize> = r.positions.iter().map(|p| p[agent]).collect();
            path.sort_unstable();
            path.dedup();
            assert_eq!(path.len(), 9, "{v:?}");
        }
    }
}

#[test]
fn fresh_model_predicts_uniformly() {
    for v in VARIANTS {
        let m = model(v, 4, 4, 8, 17);
        let graphs = [&rook_4x4(), &shrikhande()];
        let (loss, grads, rows) = m.loss_and_grads(&graphs, &[0, 1], &mut SeededNoise::new(0, 0)).unwrap();
        assert_eq!(loss, 2f64.ln());
        assert!(rows.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(grads.len(), m.store.len());
    }
}

#[test]
fn equal_seeds_give_identical_logits() {
    let g = random_graph(12, 3);
    for v in VARIANTS {
        let build = || {
            let mut m: AgentNet<f32> = AgentNet::new(ModelConfig::new(v, 6, 8, 16, 3), 21).unwrap();
            for p in m.store.iter_mut() {
                p.values.iter_mut().for_each(|x| *x += 0.01);
            }
            m
        };
        let (a, b) = (build(), build());
        assert_eq!(a.store, b.store);
        let ra = a.predict(&[&g, &g], &mut SeededNoise::new(4, 4)).unwrap();
        let rb = b.predict(&[&g, &g], &mut SeededNoise::new(4, 4)).unwrap();
        assert_eq!(ra, rb);
    }
}

#[test]
fn node_blind_ablation_cannot_tell_strongly_regular_twins_apart() {
    let mut cfg = ModelConfig::new(Variant::Full, 16, 8, 8, 2);
    cfg.ablations = Ablations {
        disable_node_update: true,
        disable_neighborhood_update: false,
        neighborhood_update_for_all: true,
    };
    let mut m: AgentNet<f64> = AgentNet::new(cfg, 22).unwrap();
    perturb(&mut m, 23, 0.4);
    let a = logits(&m, &[&rook_4x4()], &mut SeededNoise::new(5, 5));
    let b = logits(&m, &[&shrikhande()], &mut SeededNoise::new(6, 6));
    assert_close(&a, &b, 1e-12);

    let full = {
        let mut m = model(Variant::Full, 16, 8, 8, 22);
        perturb(&mut m, 23, 0.4);
        m
    };
    let mut noise = KeyedNoise { seed: 5 };
    let fa = logits(&full, &[&rook_4x4()], &mut noise);
    let fb = logits(&full, &[&shrikhande()], &mut noise);
    assert_ne!(fa, fb);
}

#[test]
fn invalid_configs_are_rejected() {
    let ok = ModelConfig::new(Variant::Full, 2, 2, 4, 2);
    assert!(ok.validate().is_ok());
    let mut bad = Vec::new();
    for f in [
        |c: &mut ModelConfig| c.agents = 0,
        |c: &mut ModelConfig| c.steps = 0,
        |c: &mut ModelConfig| c.hidden = 5,
        |c: &mut ModelConfig| c.class_count = 1,
        |c: &mut ModelConfig| c.temperature = 0.0,
        |c: &mut ModelConfig| c.exploration_decay = 1.5,
        |c: &mut ModelConfig| c.ablations.neighborhood_update_for_all = true,
    ] {
        let mut c = ok.clone();
        f(&mut c);
        bad.push(c);
    }
    for c in bad {
        assert!(AgentNet::<f32>::new(c.clone(), 0).is_err(), "{c:?}");
    }
    let json = serde_json::to_string(&ok).unwrap();
    assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), ok);
    assert!("walker".parse::<Variant>().is_err());
    assert_eq!("random-walk".parse::<Variant>().unwrap(), Variant::RandomWalk);
}

#[test]
fn wrong_feature_width_is_an_error() {
    let m = model(Variant::Full, 2, 2, 4, 0);
    let g = Graph::from_feature_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[(0, 1)]).unwrap();
    assert!(m.predict(&[&g], &mut SeededNoise::new(0, 0)).is_err());
    assert!(m.predict(&[], &mut SeededNoise::new(0, 0)).is_err());
}
