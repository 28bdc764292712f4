//! The agent model: k agents walk each graph for a fixed number of steps,
//! writing into node states and reading them back, then pool into class logits.

use std::collections::HashMap;

use agentnet_autodiff::tape::{group_counts, log_scale};
use agentnet_autodiff::{
    sinusoidal_time_embedding, Bound, Init, Linear, MlpBlock, ParamId, ParamStore, Real, Tape, Var, DROP,
};
use agentnet_graph::rng::stream_rng;
use agentnet_graph::Graph;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::noise::NoiseSource;

pub const DEFAULT_TEMPERATURE: f64 = 2.0 / 3.0;
pub const DEFAULT_EXPLORATION_DECAY: f64 = 0.9;
/// Initial `[previous, current, explored, unexplored]` transition biases.
pub const TRANSITION_BIAS_INIT: [f64; 4] = [0.0, -1.0, 0.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    Simplified,
    RandomWalk,
}

impl std::str::FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "simplified" => Ok(Variant::Simplified),
            "random-walk" => Ok(Variant::RandomWalk),
            _ => Err(CoreError::InvalidConfig(format!("unknown variant {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub disable_node_update: bool,
    pub disable_neighborhood_update: bool,
    pub neighborhood_update_for_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub agents: usize,
    pub steps: usize,
    pub hidden: usize,
    pub class_count: usize,
    #[serde(default = "one")]
    pub input_dim: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_decay")]
    pub exploration_decay: f64,
    #[serde(default)]
    pub ablations: Ablations,
    #[serde(default = "yes")]
    pub global_agent_communication: bool,
    /// Noise-free argmax transitions at evaluation time.
    #[serde(default)]
    pub greedy_eval: bool,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_decay() -> f64 {
    DEFAULT_EXPLORATION_DECAY
}

impl ModelConfig {
    pub fn new(variant: Variant, agents: usize, steps: usize, hidden: usize, class_count: usize) -> Self {
        ModelConfig {
            variant,
            agents,
            steps,
            hidden,
            class_count,
            input_dim: 1,
            temperature: DEFAULT_TEMPERATURE,
            exploration_decay: DEFAULT_EXPLORATION_DECAY,
            ablations: Ablations::default(),
            global_agent_communication: true,
            greedy_eval: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.agents == 0 || self.steps == 0 {
            return bad("agents and steps must be at least 1".into());
        }
        if self.hidden < 2 || !self.hidden.is_multiple_of(2) {
            return bad(format!("hidden size {} must be even and at least 2", self.hidden));
        }
        if self.class_count < 2 {
            return bad("need at least two classes".into());
        }
        if self.input_dim == 0 {
            return bad("input dimension must be positive".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.exploration_decay) {
            return bad(format!("exploration decay {} outside [0, 1]", self.exploration_decay));
        }
        let a = &self.ablations;
        if a.neighborhood_update_for_all && (!a.disable_node_update || a.disable_neighborhood_update) {
            return bad("neighborhood_update_for_all requires disable_node_update and an enabled neighborhood update".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Policy {
    Full { query: Linear, key: Linear, bias: ParamId },
    Simplified { hidden: Linear, out: Linear },
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layers {
    enc1: Linear,
    enc2: Linear,
    start: ParamId,
    node_update: MlpBlock,
    neighborhood: MlpBlock,
    agent_update: MlpBlock,
    readout_block: MlpBlock,
    readout: Linear,
    policy: Policy,
}

#[derive(Debug, Clone)]
pub struct AgentNet<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    layers: Layers,
}

/// Switches used by checks; training and evaluation use the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RolloutOptions {
    /// Forward the soft Gumbel sample instead of the one-hot, keeping the
    /// straight-through gradient exact for finite-difference checks.
    pub relaxed: bool,
    /// Zero Gumbel noise: every move is the argmax of its logits.
    pub greedy: bool,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// `[graphs, classes]` summed per-step logits.
    pub logits: Var,
    /// Agent-step occupancies per graph, including the start placement.
    pub visits: Vec<Vec<u32>>,
    /// Local positions per step (start first), `positions[t][graph * k + agent]`.
    pub positions: Vec<Vec<usize>>,
}

struct Entries {
    agent: Vec<usize>,
    node: Vec<usize>,
    weight: Var,
}

impl<T: Real> AgentNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, 0x1417);
        let mut store = ParamStore::new();
        let (d, h) = (config.input_dim, config.hidden);
        let enc1 = Linear::new(&mut store, "encoder.l1", d, h, Init::KaimingUniform, &mut rng);
        let enc2 = Linear::new(&mut store, "encoder.l2", h, h, Init::KaimingUniform, &mut rng);
        let bound = 3f64.sqrt();
        let start_values = (0..config.agents * h).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        let start = store.add("agents.start", config.agents, h, start_values);
        let node_in = if config.global_agent_communication { 3 * h } else { 2 * h };
        let node_update = MlpBlock::new(&mut store, "node_update", node_in, h, h, &mut rng);
        let neighborhood = MlpBlock::new(&mut store, "neighborhood", 2 * h, h, h, &mut rng);
        let agent_update = MlpBlock::new(&mut store, "agent_update", 2 * h, h, h, &mut rng);
        let readout_block = MlpBlock::new(&mut store, "readout.block", h, h, h, &mut rng);
        let readout = Linear::new(&mut store, "readout.out", 2 * h, config.class_count, Init::Zero, &mut rng);
        let policy = match config.variant {
            Variant::Full => {
                let query = Linear::new(&mut store, "policy.query", h, h, Init::KaimingUniform, &mut rng);
                let key = Linear::new(&mut store, "policy.key", 2 * h, h, Init::Zero, &mut rng);
                let bias = store.add("policy.bias", 4, 1, TRANSITION_BIAS_INIT.iter().map(|&b| T::lit(b)).collect());
                Policy::Full { query, key, bias }
            }
            Variant::Simplified => {
                let hidden = Linear::new(&mut store, "policy.l1", h, h, Init::KaimingUniform, &mut rng);
                let out = Linear::new(&mut store, "policy.l2", h, 4, Init::Zero, &mut rng);
                store.get_mut(out.bias).values = TRANSITION_BIAS_INIT.iter().map(|&b| T::lit(b)).collect();
                Policy::Simplified { hidden, out }
            }
            Variant::RandomWalk => Policy::RandomWalk,
        };
        Ok(AgentNet {
            config,
            store,
            layers: Layers {
                enc1,
                enc2,
                start,
                node_update,
                neighborhood,
                agent_update,
                readout_block,
                readout,
                policy,
            },
        })
    }

    pub fn cast<U: Real>(&self) -> AgentNet<U> {
        AgentNet {
            config: self.config.clone(),
            store: self.store.cast(),
            layers: self.layers,
        }
    }

    /// Output layers of every residual block, which start at zero.
    pub fn block_output_params(&self) -> Vec<ParamId> {
        let l = &self.layers;
        [l.node_update, l.neighborhood, l.agent_update, l.readout_block]
            .iter()
            .flat_map(|b| [b.l2.weight, b.l2.bias])
            .collect()
    }

    pub fn start_param(&self) -> ParamId {
        self.layers.start
    }

    /// Parameters of the transition policy (empty for the random walk).
    pub fn policy_params(&self) -> Vec<ParamId> {
        match self.layers.policy {
            Policy::Full { query, key, bias } => vec![query.weight, query.bias, key.weight, key.bias, bias],
            Policy::Simplified { hidden, out } => vec![hidden.weight, hidden.bias, out.weight, out.bias],
            Policy::RandomWalk => Vec::new(),
        }
    }

    /// Records one batched rollout over the disjoint union of `graphs`.
    pub fn rollout(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        graphs: &[&Graph],
        noise: &mut dyn NoiseSource,
        opts: RolloutOptions,
    ) -> Result<Rollout> {
        let cfg = &self.config;
        let l = &self.layers;
        let (k, h) = (cfg.agents, cfg.hidden);
        let batch = graphs.len();
        if batch == 0 {
            return Err(CoreError::InvalidConfig("empty batch".into()));
        }
        let mut offset = Vec::with_capacity(batch + 1);
        offset.push(0);
        for (b, g) in graphs.iter().enumerate() {
            if g.node_count() == 0 {
                return Err(CoreError::EmptyGraph(b));
            }
            if g.feature_dim() != cfg.input_dim {
                return Err(CoreError::FeatureDimension {
                    expected: cfg.input_dim,
                    found: g.feature_dim(),
                });
            }
            offset.push(offset[b] + g.node_count());
        }
        let total = offset[batch];
        let node_graph: Vec<usize> = (0..batch).flat_map(|b| std::iter::repeat_n(b, graphs[b].node_count())).collect();
        let nbrs = |u: usize| {
            let b = node_graph[u];
            let o = offset[b];
            graphs[b].neighbors(u - o).iter().map(move |&w| w + o)
        };
        let agents = batch * k;
        let agent_graph: Vec<usize> = (0..agents).map(|i| i / k).collect();

        let feats: Vec<T> = graphs
            .iter()
            .flat_map(|g| g.feature_buffer().iter().map(|&x| T::lit(x)))
            .collect();
        let x = tape.constant(feats, total, cfg.input_dim)?;
        let x = l.enc1.forward(tape, bound, x)?;
        let x = tape.leaky_relu(x, T::lit(agentnet_autodiff::nn::LEAKY_SLOPE))?;
        let mut v = l.enc2.forward(tape, bound, x)?;
        let agent_slot: Vec<usize> = (0..agents).map(|i| i % k).collect();
        let mut a = tape.gather(bound.var(l.start), &agent_slot)?;

        let mut visits = vec![0u32; total];
        let mut pos: Vec<usize> = (0..agents)
            .map(|i| {
                let b = agent_graph[i];
                offset[b] + noise.placement(b, i % k, graphs[b].node_count()) % graphs[b].node_count()
            })
            .collect();
        let mut prev: Vec<Option<usize>> = vec![None; agents];
        let mut marks: Vec<HashMap<usize, usize>> = pos.iter().map(|&p| HashMap::from([(p, 0)])).collect();
        for &p in &pos {
            visits[p] += 1;
        }
        let local = |i: usize, p: usize| p - offset[agent_graph[i]];
        let mut positions = vec![pos.iter().enumerate().map(|(i, &p)| local(i, p)).collect::<Vec<_>>()];
        let mut entries = Entries {
            agent: (0..agents).collect(),
            node: pos.clone(),
            weight: tape.constant(vec![T::one(); agents], agents, 1)?,
        };
        let mut logits: Option<Var> = None;
        let slope = T::lit(agentnet_autodiff::nn::LEAKY_SLOPE);

        for t in 0..cfg.steps {
            let te_vals: Vec<T> = sinusoidal_time_embedding(t, h)?.into_iter().map(T::lit).collect();
            let te = tape.constant(te_vals, 1, h)?;
            let mut row_of = vec![DROP; total];
            let mut occupied: Vec<usize> = pos.clone();
            occupied.sort_unstable();
            occupied.dedup();
            for (r, &u) in occupied.iter().enumerate() {
                row_of[u] = r;
            }

            if !cfg.ablations.disable_node_update {
                let here: Vec<usize> = pos.iter().map(|&p| row_of[p]).collect();
                let counts = group_counts(&here, occupied.len());
                let scale = counts.iter().map(|&c| T::lit(log_scale(c as f64))).collect();
                let seg: Vec<usize> = entries.node.iter().map(|&u| row_of[u]).collect();
                let ea = tape.gather(a, &entries.agent)?;
                let ea = tape.mul_col(ea, entries.weight)?;
                let pooled = tape.segment_sum_scaled(ea, &seg, scale)?;
                let vo = tape.gather(v, &occupied)?;
                let vo = tape.add_row(vo, te)?;
                let mut parts = vec![vo, pooled];
                if cfg.global_agent_communication {
                    let mean = tape.segment_mean(a, &agent_graph, batch)?;
                    let per_node: Vec<usize> = occupied.iter().map(|&u| node_graph[u]).collect();
                    parts.push(tape.gather(mean, &per_node)?);
                }
                let input = tape.concat(&parts)?;
                let delta = l.node_update.delta(tape, bound, input)?;
                v = tape.scatter_add(v, &occupied, delta)?;
            }

            if !cfg.ablations.disable_neighborhood_update {
                let targets: Vec<usize> = if cfg.ablations.neighborhood_update_for_all {
                    (0..total).collect()
                } else {
                    occupied.clone()
                };
                let mut src = Vec::new();
                let mut seg = Vec::new();
                let mut scale = Vec::with_capacity(targets.len());
                for (r, &u) in targets.iter().enumerate() {
                    let before = src.len();
                    src.extend(nbrs(u));
                    seg.resize(src.len(), r);
                    scale.push(T::lit(log_scale((src.len() - before) as f64)));
                }
                let nv = tape.gather(v, &src)?;
                let pooled = tape.segment_sum_scaled(nv, &seg, scale)?;
                let vt = tape.gather(v, &targets)?;
                let vt = tape.add_row(vt, te)?;
                let input = tape.concat(&[vt, pooled])?;
                let delta = l.neighborhood.delta(tape, bound, input)?;
                v = tape.scatter_add(v, &targets, delta)?;
            }

            let ev = tape.gather(v, &entries.node)?;
            let ev = tape.mul_col(ev, entries.weight)?;
            let seen = tape.segment_sum(ev, &entries.agent, agents)?;
            let at = tape.add_row(a, te)?;
            let input = tape.concat(&[at, seen])?;
            a = l.agent_update.forward(tape, bound, input, a)?;

            let at = tape.add_row(a, te)?;
            let o = l.readout_block.forward(tape, bound, at, at)?;
            let mean = tape.segment_mean(o, &agent_graph, batch)?;
            let max = tape.segment_max(o, &agent_graph, batch)?;
            let pooled = tape.concat(&[mean, max])?;
            let step_logits = l.readout.forward(tape, bound, pooled)?;
            logits = Some(match logits {
                None => step_logits,
                Some(acc) => tape.add(acc, step_logits)?,
            });

            // transition
            let mut cand_agent = Vec::new();
            let mut cand_node = Vec::new();
            let mut cand_cur = Vec::new();
            let mut feats = Vec::new();
            for i in 0..agents {
                let cur = pos[i];
                let mut cands: Vec<usize> = nbrs(cur).collect();
                if cfg.variant != Variant::RandomWalk || cands.is_empty() {
                    cands.push(cur);
                }
                for c in cands {
                    cand_agent.push(i);
                    cand_node.push(c);
                    cand_cur.push(cur);
                    let x = marks[i]
                        .get(&c)
                        .map_or(0.0, |&e| cfg.exploration_decay.powi((t - e) as i32));
                    feats.extend([
                        f64::from(u8::from(prev[i] == Some(c))),
                        f64::from(u8::from(c == cur)),
                        x,
                        1.0 - x,
                    ]);
                }
            }
            let m = cand_node.len();
            let z = match l.policy {
                Policy::Full { query, key, bias } => {
                    let f = tape.constant(feats.into_iter().map(T::lit).collect(), m, 4)?;
                    let fb = tape.matmul(f, bound.var(bias))?;
                    let q = query.forward(tape, bound, a)?;
                    let q = tape.gather(q, &cand_agent)?;
                    let vc = tape.gather(v, &cand_cur)?;
                    let vn = tape.gather(v, &cand_node)?;
                    let kin = tape.concat(&[vc, vn])?;
                    let kv = key.forward(tape, bound, kin)?;
                    let att = tape.rows_dot(q, kv)?;
                    let att = tape.scale(att, T::one() / T::lit(h as f64).sqrt())?;
                    tape.add(fb, att)?
                }
                Policy::Simplified { hidden, out } => {
                    let f = tape.constant(feats.into_iter().map(T::lit).collect(), m, 4)?;
                    let g = hidden.forward(tape, bound, a)?;
                    let g = tape.leaky_relu(g, slope)?;
                    let g = out.forward(tape, bound, g)?;
                    let g = tape.gather(g, &cand_agent)?;
                    tape.rows_dot(f, g)?
                }
                Policy::RandomWalk => tape.constant(vec![T::zero(); m], m, 1)?,
            };
            let gumbel: Vec<T> = (0..m)
                .map(|j| {
                    if opts.greedy {
                        T::zero()
                    } else {
                        let i = cand_agent[j];
                        T::lit(noise.gumbel(agent_graph[i], i % k, t, local(i, cand_node[j])))
                    }
                })
                .collect();
            let y = tape.gumbel_softmax_st(z, &cand_agent, agents, &gumbel, T::lit(cfg.temperature), !opts.relaxed)?;
            let yv = tape.value(y);
            let mut best = vec![DROP; agents];
            for j in 0..m {
                let i = cand_agent[j];
                if best[i] == DROP || yv[j] > yv[best[i]] {
                    best[i] = j;
                }
            }
            for i in 0..agents {
                prev[i] = Some(pos[i]);
                pos[i] = cand_node[best[i]];
                marks[i].insert(pos[i], t + 1);
                visits[pos[i]] += 1;
            }
            positions.push(pos.iter().enumerate().map(|(i, &p)| local(i, p)).collect());
            entries = Entries {
                agent: cand_agent,
                node: cand_node,
                weight: y,
            };
        }

        let visits = (0..batch).map(|b| visits[offset[b]..offset[b + 1]].to_vec()).collect();
        Ok(Rollout {
            logits: logits.expect("at least one step"),
            visits,
            positions,
        })
    }

    /// Loss, per-parameter gradients and logits for one labeled batch.
    pub fn loss_and_grads(
        &self,
        graphs: &[&Graph],
        labels: &[usize],
        noise: &mut dyn NoiseSource,
    ) -> Result<(f64, Vec<Vec<T>>, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let r = self.rollout(&mut tape, &bound, graphs, noise, RolloutOptions::default())?;
        let loss = tape.cross_entropy(r.logits, labels)?;
        let grads = tape.backward(loss)?;
        let logits = rows(&tape, r.logits);
        Ok((tape.scalar(loss).as_f64(), self.store.collect_grads(&bound, &grads), logits))
    }

    /// Class logits and visit counts without recording gradients.
    pub fn predict(&self, graphs: &[&Graph], noise: &mut dyn NoiseSource) -> Result<(Vec<Vec<f64>>, Vec<Vec<u32>>)> {
        let mut tape = Tape::new();
        let bound = Bound(
            self.store
                .iter()
                .map(|p| tape.constant(p.values.clone(), p.rows, p.cols))
                .collect::<agentnet_autodiff::error::Result<_>>()?,
        );
        let opts = RolloutOptions {
            relaxed: false,
            greedy: self.config.greedy_eval,
        };
        let r = self.rollout(&mut tape, &bound, graphs, noise, opts)?;
        Ok((rows(&tape, r.logits), r.visits))
    }
}

fn rows<T: Real>(tape: &Tape<T>, v: Var) -> Vec<Vec<f64>> {
    let (_, c) = tape.shape(v);
    tape.value(v).chunks(c).map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
