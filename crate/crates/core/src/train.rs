//! Seeded training and evaluation of the agent model.

use agentnet_autodiff::{clip_global_norm, cosine_lr, AdamW};
use agentnet_graph::datasets::{
    gen_csl_sized, gen_four_cycles, gen_ladder, gen_two_wl_pair, Crossing, LabeledDataset, LabeledGraph,
};
use agentnet_graph::protocols::par_map;
use agentnet_graph::rng::{stream_rng, substream};
use agentnet_graph::Graph;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{argmax, AgentNet, ModelConfig};
use crate::noise::SeededNoise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DatasetSpec {
    FourCycles { count: usize, seed: u64 },
    Csl { per_class: usize, seed: u64 },
    TwoWl,
    Ladder {
        cells: usize,
        /// Crossed-cell fraction; ignored when `crossed_cells` is set.
        density: f64,
        crossed_cells: Option<usize>,
        pairs: usize,
        seed: u64,
    },
}

/// Train and held-out graphs of one dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub name: String,
    pub class_count: usize,
    pub train: Vec<LabeledGraph>,
    pub test: Vec<LabeledGraph>,
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<LabeledDataset> {
        Ok(match *self {
            DatasetSpec::FourCycles { count, seed } => gen_four_cycles(count, seed)?,
            DatasetSpec::Csl { per_class, seed } => gen_csl_sized(per_class, seed),
            DatasetSpec::TwoWl => gen_two_wl_pair(),
            DatasetSpec::Ladder {
                cells,
                density,
                crossed_cells,
                pairs,
                seed,
            } => {
                let mode = crossed_cells.map_or(Crossing::Density(density), Crossing::Fixed);
                gen_ladder(cells, mode, pairs, seed)?
            }
        })
    }

    /// Pairs stay together, skip-link classes are stratified, and the
    /// two-graph set is its own test set.
    pub fn split(&self, test_fraction: f64) -> Result<Split> {
        let ds = self.generate()?;
        let mut rng = stream_rng(ds.generator_seed, 0x5b17);
        let (train, test) = match self {
            DatasetSpec::TwoWl => (ds.items.clone(), ds.items.clone()),
            DatasetSpec::Csl { .. } => {
                let mut train = Vec::new();
                let mut test = Vec::new();
                for c in 0..ds.class_count {
                    let mut items: Vec<LabeledGraph> = ds.items.iter().filter(|i| i.label == c).cloned().collect();
                    items.shuffle(&mut rng);
                    let n_test = held_out(items.len(), test_fraction);
                    test.extend(items.drain(..n_test));
                    train.extend(items);
                }
                (train, test)
            }
            DatasetSpec::FourCycles { .. } | DatasetSpec::Ladder { .. } => {
                let mut groups: Vec<usize> = ds.items.iter().map(|i| i.group).collect();
                groups.sort_unstable();
                groups.dedup();
                groups.shuffle(&mut rng);
                let n_test = held_out(groups.len(), test_fraction);
                let test_groups = &groups[..n_test];
                ds.items.iter().cloned().partition(|i| !test_groups.contains(&i.group))
            }
        };
        Ok(Split {
            name: ds.name,
            class_count: ds.class_count,
            train,
            test,
        })
    }
}

fn held_out(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub batch_size: usize,
    pub training_steps: usize,
    pub seeds: Vec<u64>,
    pub lr: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Stop once every training batch is classified perfectly for this many consecutive steps.
    pub early_stop_patience: Option<usize>,
    /// Record loss and batch accuracy every this many steps.
    pub log_every: usize,
    pub test_fraction: f64,
    /// Stochastic rollouts per held-out graph at evaluation.
    pub eval_rollouts: usize,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec, model: ModelConfig) -> Self {
        ExperimentConfig {
            dataset,
            model,
            batch_size: 50,
            training_steps: 10_000,
            seeds: (0..10).collect(),
            lr: 1e-4,
            lr_end: 1e-11,
            weight_decay: 0.1,
            clip_norm: 1.0,
            early_stop_patience: Some(500),
            log_every: 100,
            test_fraction: 0.2,
            eval_rollouts: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.into()));
        if self.seeds.is_empty() {
            return bad("seeds list is empty");
        }
        if self.batch_size == 0 || self.training_steps == 0 || self.eval_rollouts == 0 || self.log_every == 0 {
            return bad("batch size, steps, eval rollouts and log cadence must be positive");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPoint {
    pub step: usize,
    pub loss: f64,
    pub batch_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub initial_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub trajectory: Vec<LogPoint>,
    pub param_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config_hash: String,
    pub dataset: String,
    pub seeds: Vec<SeedResult>,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_train_accuracy: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Metrics {
    pub fn from_seeds(config_hash: String, dataset: String, seeds: Vec<SeedResult>) -> Self {
        let test: Vec<f64> = seeds.iter().map(|s| s.test_accuracy).collect();
        let train: Vec<f64> = seeds.iter().map(|s| s.train_accuracy).collect();
        let (mean_test_accuracy, std_test_accuracy) = mean_std(&test);
        Metrics {
            config_hash,
            dataset,
            seeds,
            mean_test_accuracy,
            std_test_accuracy,
            mean_train_accuracy: mean_std(&train).0,
        }
    }
}

pub struct Trained {
    pub result: SeedResult,
    pub model: AgentNet<f32>,
}

const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_ROLLOUT: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Fraction of `items` classified correctly, averaged over `rollouts` stochastic passes.
pub fn accuracy(
    model: &AgentNet<f32>,
    items: &[LabeledGraph],
    batch_size: usize,
    rollouts: usize,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    if items.is_empty() {
        return Ok(f64::NAN);
    }
    let mut correct = 0usize;
    for r in 0..rollouts {
        for (c, chunk) in items.chunks(batch_size.max(1)).enumerate() {
            let graphs: Vec<&Graph> = chunk.iter().map(|i| &i.graph).collect();
            let mut noise = SeededNoise::new(seed, substream(stream, substream(r as u64, c as u64)));
            let (logits, _) = model.predict(&graphs, &mut noise)?;
            correct += chunk.iter().zip(&logits).filter(|(i, l)| argmax(l) == i.label).count();
        }
    }
    Ok(correct as f64 / (items.len() * rollouts) as f64)
}

pub fn param_hash(model: &AgentNet<f32>) -> String {
    hex::encode(Sha256::digest(model.store.to_json().as_bytes()))
}

/// Trains one seed to completion or early stop, then evaluates.
pub fn train_seed(cfg: &ExperimentConfig, split: &Split, seed: u64) -> Result<Trained> {
    let mut mcfg = cfg.model.clone();
    mcfg.class_count = split.class_count;
    if let Some(first) = split.train.first() {
        mcfg.input_dim = first.graph.feature_dim();
    }
    let mut model = AgentNet::<f32>::new(mcfg, substream(seed, STREAM_INIT))?;
    let mut opt = AdamW::new(&model.store, cfg.lr, cfg.weight_decay);
    let mut batch_rng = stream_rng(seed, STREAM_BATCH);
    let mut trajectory = Vec::new();
    let (mut window_loss, mut window_acc, mut window_n) = (0.0, 0.0, 0usize);
    let mut perfect_run = 0usize;
    let mut initial_loss = f64::NAN;
    let mut steps_run = 0;
    let mut stopped_early = false;
    for step in 0..cfg.training_steps {
        let batch: Vec<&LabeledGraph> = (0..cfg.batch_size)
            .map(|_| &split.train[batch_rng.gen_range(0..split.train.len())])
            .collect();
        let graphs: Vec<&Graph> = batch.iter().map(|i| &i.graph).collect();
        let labels: Vec<usize> = batch.iter().map(|i| i.label).collect();
        let mut noise = SeededNoise::new(seed, substream(STREAM_ROLLOUT, step as u64));
        let (loss, mut grads, logits) = model.loss_and_grads(&graphs, &labels, &mut noise)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                step,
                seed,
                config_hash: cfg.hash(),
            });
        }
        if step == 0 {
            initial_loss = loss;
        }
        let correct = logits.iter().zip(&labels).filter(|(l, &y)| argmax(l) == y).count();
        let acc = correct as f64 / labels.len() as f64;
        clip_global_norm(&mut grads, cfg.clip_norm);
        opt.lr = cosine_lr(step, cfg.training_steps, cfg.lr, cfg.lr_end);
        opt.step(&mut model.store, &grads)?;
        steps_run = step + 1;
        window_loss += loss;
        window_acc += acc;
        window_n += 1;
        if steps_run % cfg.log_every == 0 {
            trajectory.push(LogPoint {
                step: steps_run,
                loss: window_loss / window_n as f64,
                batch_accuracy: window_acc / window_n as f64,
            });
            (window_loss, window_acc, window_n) = (0.0, 0.0, 0);
        }
        perfect_run = if correct == labels.len() { perfect_run + 1 } else { 0 };
        if cfg.early_stop_patience.is_some_and(|p| perfect_run >= p) {
            stopped_early = true;
            break;
        }
    }
    if window_n > 0 {
        trajectory.push(LogPoint {
            step: steps_run,
            loss: window_loss / window_n as f64,
            batch_accuracy: window_acc / window_n as f64,
        });
    }
    let train_accuracy = accuracy(&model, &split.train, cfg.batch_size, 1, seed, substream(STREAM_EVAL, 0))?;
    let test_accuracy = accuracy(
        &model,
        &split.test,
        cfg.batch_size,
        cfg.eval_rollouts,
        seed,
        substream(STREAM_EVAL, 1),
    )?;
    Ok(Trained {
        result: SeedResult {
            seed,
            steps_run,
            stopped_early,
            initial_loss,
            train_accuracy,
            test_accuracy,
            trajectory,
            param_hash: param_hash(&model),
        },
        model,
    })
}

/// Trains every seed, `workers` at a time; results are in seed order.
pub fn train(cfg: &ExperimentConfig, workers: usize) -> Result<Metrics> {
    Ok(train_models(cfg, workers)?.0)
}

pub fn train_models(cfg: &ExperimentConfig, workers: usize) -> Result<(Metrics, Vec<AgentNet<f32>>)> {
    cfg.validate()?;
    let split = cfg.dataset.split(cfg.test_fraction)?;
    let runs: Vec<Trained> = par_map(cfg.seeds.len(), workers, |i| train_seed(cfg, &split, cfg.seeds[i]))
        .into_iter()
        .collect::<Result<_>>()?;
    let (results, models) = runs.into_iter().map(|t| (t.result, t.model)).unzip();
    Ok((Metrics::from_seeds(cfg.hash(), split.name, results), models))
}

/// A trained model on disk: its configuration and parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: serde_json::Value,
}

pub fn save_checkpoint(model: &AgentNet<f32>) -> Result<String> {
    let ckpt = Checkpoint {
        config: model.config.clone(),
        params: serde_json::from_str(&model.store.to_json())?,
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn load_checkpoint(text: &str) -> Result<AgentNet<f32>> {
    let ckpt: Checkpoint = serde_json::from_str(text)?;
    let mut model = AgentNet::<f32>::new(ckpt.config, 0)?;
    model.store.load_json(&ckpt.params.to_string())?;
    Ok(model)
}
