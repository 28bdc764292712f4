//! Randomness consumed by a rollout: start placements and Gumbel perturbations.

use agentnet_graph::rng::{stream_rng, substream, StreamRng};
use rand::Rng;

pub trait NoiseSource {
    /// Start node of `agent` in graph `graph` with `nodes` nodes.
    fn placement(&mut self, graph: usize, agent: usize, nodes: usize) -> usize;
    /// Gumbel sample for the move of `agent` at `step` to local node `node`.
    fn gumbel(&mut self, graph: usize, agent: usize, step: usize, node: usize) -> f64;
}

pub fn standard_gumbel(u: f64) -> f64 {
    -(-u.ln()).ln()
}

fn open_unit(rng: &mut StreamRng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws sequentially from one seeded stream.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: StreamRng,
}

impl SeededNoise {
    pub fn new(seed: u64, stream: u64) -> Self {
        SeededNoise {
            rng: stream_rng(seed, stream),
        }
    }
}

impl NoiseSource for SeededNoise {
    fn placement(&mut self, _graph: usize, _agent: usize, nodes: usize) -> usize {
        self.rng.gen_range(0..nodes)
    }

    fn gumbel(&mut self, _graph: usize, _agent: usize, _step: usize, _node: usize) -> f64 {
        standard_gumbel(open_unit(&mut self.rng))
    }
}

/// Pure function of its arguments, so the same draw is seen however a
/// rollout is ordered. Used to freeze noise across relabelings.
#[derive(Debug, Clone, Copy)]
pub struct KeyedNoise {
    pub seed: u64,
}

impl KeyedNoise {
    fn key(&self, parts: &[u64]) -> StreamRng {
        let stream = parts.iter().fold(0x006b_6579_6564_u64, |acc, &p| substream(acc, p));
        stream_rng(self.seed, stream)
    }
}

impl NoiseSource for KeyedNoise {
    fn placement(&mut self, graph: usize, agent: usize, nodes: usize) -> usize {
        self.key(&[0, graph as u64, agent as u64]).gen_range(0..nodes)
    }

    fn gumbel(&mut self, graph: usize, agent: usize, step: usize, node: usize) -> f64 {
        let mut rng = self.key(&[1, graph as u64, agent as u64, step as u64, node as u64]);
        standard_gumbel(open_unit(&mut rng))
    }
}
