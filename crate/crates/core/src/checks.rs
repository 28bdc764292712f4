//! End-to-end gradient check of a short rollout with frozen noise.

use agentnet_autodiff::{grad_check_steps, Bound, GradCheckReport, Input, Tape, Var};
use agentnet_graph::rng::stream_rng;
use agentnet_graph::Graph;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{AgentNet, ModelConfig, RolloutOptions, Variant};
use crate::noise::KeyedNoise;

/// Finite-difference steps of the rollout check: the largest keeps roundoff
/// low on tiny gradients, the smaller ones keep truncation low where the
/// tempered softmax bends sharply.
pub const ROLLOUT_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutCheck {
    pub variant: Variant,
    pub report: GradCheckReport,
    /// Policy parameters that received no gradient through the discrete moves.
    pub policy_params_without_gradient: Vec<String>,
}

/// Two agents, two steps, hidden width 4, on a 6-node graph; every parameter
/// is moved off its initial value by up to 0.5 so no block is an identity.
pub fn rollout_grad_check(variant: Variant, seed: u64) -> Result<RolloutCheck> {
    let g = Graph::with_uniform_features(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)])?;
    let mut m = AgentNet::<f64>::new(ModelConfig::new(variant, 2, 2, 4, 2), seed)?;
    let mut rng = stream_rng(seed, 0xc4ec);
    for p in m.store.iter_mut() {
        p.values.iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
    }
    let inputs: Vec<Input> = m.store.iter().map(|p| Input::new(p.values.clone(), p.rows, p.cols)).collect();
    let noise = KeyedNoise { seed };
    let run = |tape: &mut Tape<f64>, vars: &[Var]| -> agentnet_autodiff::error::Result<Var> {
        let bound = Bound(vars.to_vec());
        let opts = RolloutOptions {
            relaxed: true,
            greedy: false,
        };
        let r = m
            .rollout(tape, &bound, &[&g], &mut noise.clone(), opts)
            .map_err(|e| agentnet_autodiff::TensorError::InvalidArgument {
                op: "rollout",
                reason: e.to_string(),
            })?;
        let w = tape.constant(vec![0.7, -1.3], 1, 2)?;
        let p = tape.mul(r.logits, w)?;
        tape.sum(p)
    };
    let report = grad_check_steps(run, &inputs, &ROLLOUT_STEPS)?;

    let mut tape = Tape::new();
    let bound = m.store.bind(&mut tape);
    let out = run(&mut tape, &bound.0)?;
    let grads = tape.backward(out)?;
    let policy_params_without_gradient = m
        .policy_params()
        .into_iter()
        .filter(|&id| grads.get(bound.var(id)).is_none_or(|g| g.iter().all(|&x| x == 0.0)))
        .map(|id| m.store.get(id).name.clone())
        .collect();
    Ok(RolloutCheck {
        variant,
        report,
        policy_params_without_gradient,
    })
}
