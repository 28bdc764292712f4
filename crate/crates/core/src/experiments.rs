//! Grid search and the standard experiment tables, with CSV/JSON output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use agentnet_graph::datasets::Crossing;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Ablations, ModelConfig, Variant};
use crate::train::{self, DatasetSpec, ExperimentConfig, Metrics};

/// Budget presets: `Large` is the full recipe (hidden 128, batch 50, 10k
/// steps at lr 1e-4), `Desk` is sized for a single CPU core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Large,
}

impl std::str::FromStr for Scale {
    type Err = crate::CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "large" => Ok(Scale::Large),
            _ => Err(crate::CoreError::InvalidConfig(format!("unknown scale {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FourCycles,
    Csl,
    TwoWl,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::FourCycles, Task::Csl, Task::TwoWl];

    pub fn name(self) -> &'static str {
        match self {
            Task::FourCycles => "four-cycles",
            Task::Csl => "csl",
            Task::TwoWl => "two-wl",
        }
    }

    pub fn nodes(self) -> usize {
        match self {
            Task::Csl => 41,
            Task::FourCycles | Task::TwoWl => 16,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Task::Csl => 10,
            Task::FourCycles | Task::TwoWl => 2,
        }
    }

    pub fn dataset(self) -> DatasetSpec {
        match self {
            Task::FourCycles => DatasetSpec::FourCycles { count: 100, seed: 1 },
            Task::Csl => DatasetSpec::Csl { per_class: 15, seed: 1 },
            Task::TwoWl => DatasetSpec::TwoWl,
        }
    }
}

/// The configuration used for `task` and `variant` at `scale`.
pub fn task_config(task: Task, variant: Variant, scale: Scale) -> ExperimentConfig {
    let mut cfg = match scale {
        Scale::Large => {
            let mut c = ExperimentConfig::new(task.dataset(), ModelConfig::new(variant, 16, 16, 128, task.classes()));
            c.batch_size = 50;
            c
        }
        Scale::Desk => {
            let (agents, steps, batch, training_steps) = match task {
                Task::FourCycles => (16, 8, 16, 3000),
                Task::Csl => (8, 16, 16, 3000),
                Task::TwoWl => (16, 8, 8, 1500),
            };
            let model = ModelConfig::new(variant, agents, steps, 32, task.classes());
            let mut c = ExperimentConfig::new(task.dataset(), model);
            c.batch_size = batch;
            c.training_steps = training_steps;
            c.lr = 2e-3;
            c.early_stop_patience = Some(200);
            c.eval_rollouts = 5;
            c
        }
    };
    if task == Task::TwoWl {
        cfg.eval_rollouts = 100;
    }
    cfg
}

/// One trained configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub config: ExperimentConfig,
    pub metrics: Metrics,
    /// Wall-clock seconds; kept out of `metrics` so repeated runs compare byte for byte.
    #[serde(skip)]
    pub seconds: f64,
}

pub fn run_cell(label: impl Into<String>, config: ExperimentConfig, workers: usize) -> Result<Cell> {
    let start = Instant::now();
    let metrics = train::train(&config, workers)?;
    Ok(Cell {
        label: label.into(),
        config,
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub batch_size: Vec<usize>,
    pub hidden: Vec<usize>,
    pub lr: Vec<f64>,
    pub agents: Vec<usize>,
    pub steps: Vec<usize>,
}

impl GridAxes {
    /// Every combination; an empty axis keeps the base value.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        fn axis<T: Clone>(v: &[T], base: T) -> Vec<T> {
            if v.is_empty() {
                vec![base]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for b in axis(&self.batch_size, base.batch_size) {
            for h in axis(&self.hidden, base.model.hidden) {
                for lr in axis(&self.lr, base.lr) {
                    for k in axis(&self.agents, base.model.agents) {
                        for l in axis(&self.steps, base.model.steps) {
                            let mut c = base.clone();
                            c.batch_size = b;
                            c.model.hidden = h;
                            c.lr = lr;
                            c.model.agents = k;
                            c.model.steps = l;
                            out.push((format!("batch={b} hidden={h} lr={lr} k={k} steps={l}"), c));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<Cell>,
    /// Index of the cell with the highest mean held-out accuracy (first on ties).
    pub best: usize,
}

pub fn grid_search(base: &ExperimentConfig, axes: &GridAxes, workers: usize) -> Result<GridResult> {
    let cells = axes
        .expand(base)
        .into_iter()
        .map(|(label, cfg)| run_cell(label, cfg, workers))
        .collect::<Result<Vec<_>>>()?;
    let best = best_cell(&cells);
    Ok(GridResult { cells, best })
}

fn best_cell(cells: &[Cell]) -> usize {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.metrics.mean_test_accuracy > cells[best].metrics.mean_test_accuracy {
            best = i;
        }
    }
    best
}

pub const VARIANTS: [Variant; 3] = [Variant::Full, Variant::Simplified, Variant::RandomWalk];

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Simplified => "simplified",
        Variant::RandomWalk => "random-walk",
    }
}

/// Every variant on every task.
pub fn run_table1(scale: Scale, seeds: &[u64], workers: usize) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for task in Task::ALL {
        for v in VARIANTS {
            let mut cfg = task_config(task, v, scale);
            cfg.seeds = seeds.to_vec();
            cells.push(run_cell(format!("{}/{}", task.name(), variant_name(v)), cfg, workers)?);
        }
    }
    Ok(cells)
}

/// Step-removal ablations of the full model.
pub const ABLATIONS: [(&str, Ablations); 4] = [
    ("full", Ablations {
        disable_node_update: false,
        disable_neighborhood_update: false,
        neighborhood_update_for_all: false,
    }),
    ("no-node-update", Ablations {
        disable_node_update: true,
        disable_neighborhood_update: false,
        neighborhood_update_for_all: false,
    }),
    ("no-neighborhood-update", Ablations {
        disable_node_update: false,
        disable_neighborhood_update: true,
        neighborhood_update_for_all: false,
    }),
    ("no-node-update-neighborhood-for-all", Ablations {
        disable_node_update: true,
        disable_neighborhood_update: false,
        neighborhood_update_for_all: true,
    }),
];

pub fn run_appendix_j(tasks: &[Task], scale: Scale, seeds: &[u64], workers: usize) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for &task in tasks {
        for (name, ablations) in ABLATIONS {
            let mut cfg = task_config(task, Variant::Full, scale);
            cfg.model.ablations = ablations;
            cfg.seeds = seeds.to_vec();
            cells.push(run_cell(format!("{}/{name}", task.name()), cfg, workers)?);
        }
    }
    Ok(cells)
}

/// Agent counts `n/8, n/4, n/2, n, 2n` on one task.
pub fn run_agent_sweep(task: Task, scale: Scale, seeds: &[u64], workers: usize) -> Result<Vec<Cell>> {
    let n = task.nodes();
    let mut cells = Vec::new();
    for k in [n / 8, n / 4, n / 2, n, 2 * n] {
        let mut cfg = task_config(task, Variant::Full, scale);
        cfg.model.agents = k.max(1);
        cfg.seeds = seeds.to_vec();
        cells.push(run_cell(format!("{}/k={}", task.name(), k.max(1)), cfg, workers)?);
    }
    Ok(cells)
}

pub const LADDER_SIZES: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingMode {
    /// Half of the cells crossed.
    Density,
    /// Exactly two crossed cells.
    FixedTwo,
}

impl CrossingMode {
    pub fn name(self) -> &'static str {
        match self {
            CrossingMode::Density => "density",
            CrossingMode::FixedTwo => "fixed-2",
        }
    }
}

/// Plain versus crossed ladders with `nodes` nodes.
pub fn ladder_config(nodes: usize, mode: CrossingMode, scale: Scale) -> ExperimentConfig {
    let cells = nodes / 2 - 1;
    let (density, crossed_cells) = match mode {
        CrossingMode::Density => (0.5, None),
        CrossingMode::FixedTwo => (0.0, Some(2)),
    };
    let dataset = DatasetSpec::Ladder {
        cells,
        density,
        crossed_cells,
        pairs: 100,
        seed: 1,
    };
    let mut cfg = ExperimentConfig::new(dataset, ModelConfig::new(Variant::Full, 16, 16, 32, 2));
    cfg.eval_rollouts = 5;
    match scale {
        Scale::Large => {
            cfg.model.hidden = 128;
            cfg.batch_size = 50;
        }
        Scale::Desk => {
            cfg.batch_size = 8;
            cfg.training_steps = 500;
            cfg.lr = 2e-3;
            cfg.early_stop_patience = Some(100);
        }
    }
    cfg
}

pub fn crossing(mode: CrossingMode) -> Crossing {
    match mode {
        CrossingMode::Density => Crossing::Density(0.5),
        CrossingMode::FixedTwo => Crossing::Fixed(2),
    }
}

pub fn run_fig3_density_sweep(sizes: &[usize], scale: Scale, seeds: &[u64], workers: usize) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for mode in [CrossingMode::Density, CrossingMode::FixedTwo] {
        for &n in sizes {
            let mut cfg = ladder_config(n, mode, scale);
            cfg.seeds = seeds.to_vec();
            cells.push(run_cell(format!("{}/{n}", mode.name()), cfg, workers)?);
        }
    }
    Ok(cells)
}

/// One CSV row per seed per cell.
pub fn cells_csv(cells: &[Cell]) -> String {
    let mut out = String::from("cell,config_hash,seed,steps_run,stopped_early,initial_loss,train_accuracy,test_accuracy,param_hash\n");
    for c in cells {
        for s in &c.metrics.seeds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.label,
                c.metrics.config_hash,
                s.seed,
                s.steps_run,
                s.stopped_early,
                s.initial_loss,
                s.train_accuracy,
                s.test_accuracy,
                s.param_hash
            ));
        }
    }
    out
}

/// Writes `<name>.csv`, `<name>.json` and `<name>.timing.json` under `dir`.
pub fn write_cells(dir: &Path, name: &str, cells: &[Cell]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.csv")), cells_csv(cells))?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(cells)?)?;
    let timing: Vec<(&str, f64)> = cells.iter().map(|c| (c.label.as_str(), c.seconds)).collect();
    fs::write(dir.join(format!("{name}.timing.json")), serde_json::to_string_pretty(&timing)?)?;
    Ok(())
}
