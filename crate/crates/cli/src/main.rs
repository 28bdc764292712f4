use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentnet_autodiff::suite;
use agentnet_core::checks::rollout_grad_check;
use agentnet_core::experiments::{self, Cell, GridAxes, Scale, Task};
use agentnet_core::train::{self, load_checkpoint, save_checkpoint};
use agentnet_core::{CoreError, ExperimentConfig, SeededNoise, Variant};
use agentnet_graph::datasets::{
    gen_csl_sized, gen_four_cycles, gen_ladder, gen_lemma4_dataset, gen_theorem8_pair, gen_two_wl_pair, Crossing,
    LabeledDataset,
};
use agentnet_graph::{io, iso, oracles, theory, walks, Graph, GraphError, WalkError};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Tensor(#[from] agentnet_autodiff::TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::File { .. } => "io",
            CliError::Core(_) => "core",
            CliError::Graph(_) => "graph",
            CliError::Walk(_) => "walk",
            CliError::Tensor(_) => "tensor",
            CliError::Json(_) => "json",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Agent-based graph learning: datasets, training, experiments and checks.
#[derive(Debug, Parser)]
#[command(name = "agentnet", version)]
struct Cli {
    /// Parallel jobs (seeds or Monte Carlo trials); 1 is bit-reproducible.
    #[arg(long, global = true, env = "AGENTNET_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Master seed (default 0); every random stream is split from it by
    /// counter. For `train` it selects the single seed to run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file path for generate-dataset).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    FourCycles,
    Csl,
    TwoWl,
    Ladder,
    Theorem8,
    Lemma4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Large,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Large => Scale::Large,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    FourCycles,
    Csl,
    TwoWl,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::FourCycles => Task::FourCycles,
            TaskArg::Csl => Task::Csl,
            TaskArg::TwoWl => Task::TwoWl,
        }
    }
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
    /// Number of training seeds, counted up from `--seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

impl SweepArgs {
    fn seed_list(&self, base: u64) -> Vec<u64> {
        (0..self.seeds).map(|i| base + i).collect()
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labeled dataset as JSON.
    GenerateDataset {
        #[arg(long, value_enum)]
        family: Family,
        /// Graphs per class for four-cycles (total) and csl (per class).
        #[arg(long)]
        count: Option<usize>,
        /// Ladder length in cells.
        #[arg(long, default_value_t = 7)]
        cells: usize,
        /// Crossed-cell fraction for ladders.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Exact number of crossed cells for ladders (overrides density).
        #[arg(long)]
        crossed_cells: Option<usize>,
        /// Plain/crossed ladder pairs.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Hub count of the tree-hub pair.
        #[arg(long, default_value_t = 10)]
        hubs: usize,
        #[arg(long, default_value_t = 4)]
        primary_depth: usize,
        #[arg(long, default_value_t = 8)]
        secondary_depth: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
    },
    /// Train every seed of a JSON experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy of a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        rollouts: usize,
    },
    /// Train every cell of a hyperparameter grid around a base config.
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// JSON object with optional lists `batch_size`, `hidden`, `lr`, `agents`, `steps`.
        #[arg(long)]
        axes: PathBuf,
    },
    /// Run the walk and protocol assertion suite.
    TheoryCheck {
        /// Skip the Monte Carlo protocol checks.
        #[arg(long)]
        fast: bool,
    },
    /// Ladder size sweep in density and fixed-crossing modes.
    Fig3 {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', default_values_t = experiments::LADDER_SIZES)]
        sizes: Vec<usize>,
    },
    /// Every model variant on every benchmark task.
    Table1 {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Update-step ablations of the full model.
    AblationJ {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["csl", "two-wl"])]
        tasks: Vec<TaskArg>,
    },
    /// Vary the number of agents relative to the graph size.
    AgentSweep {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_enum, default_value = "csl")]
        task: TaskArg,
    },
    /// Per-node visit counts of one rollout, one CSV per graph.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Graph text file.
        #[arg(long, conflicts_with = "dataset")]
        graph: Option<PathBuf>,
        /// Dataset JSON file.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Finite-difference checks of every op and of a short rollout.
    GradCheck,
    /// Exact counts on one graph.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
}

#[derive(Debug, Subcommand)]
enum OracleQuery {
    /// Cliques through a node, by size.
    Cliques {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        node: usize,
    },
    /// Cycles of one length through a node.
    Cycles {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long)]
        length: usize,
    },
    /// Size of the r-hop ball and what the walk protocols observe in it.
    Neighborhood {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long)]
        radius: usize,
    },
    /// Whether color refinement and exact search tell two graphs apart.
    Wl {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        other: PathBuf,
    },
}

impl Cli {
    fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.into(),
        source,
    })
}

fn read_graph(path: &Path) -> Result<Graph> {
    Ok(io::parse_graph(&read(path)?)?)
}

fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    Ok(LabeledDataset::from_json(&read(path)?)?)
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    fs::create_dir_all(&dir).map_err(|source| CliError::File {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::File {
        path: path.into(),
        source,
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn summarize(cells: &[Cell]) -> serde_json::Value {
    cells
        .iter()
        .map(|c| {
            json!({
                "cell": c.label,
                "mean_test_accuracy": c.metrics.mean_test_accuracy,
                "std_test_accuracy": c.metrics.std_test_accuracy,
            })
        })
        .collect()
}

fn finish_sweep(out: &Option<PathBuf>, name: &str, cells: &[Cell]) -> Result<()> {
    experiments::write_cells(&out_dir(out)?, name, cells)?;
    print_json(&summarize(cells))
}

fn generate(cli: &Cli, args: &Command) -> Result<()> {
    let Command::GenerateDataset {
        family,
        count,
        cells,
        density,
        crossed_cells,
        pairs,
        hubs,
        primary_depth,
        secondary_depth,
        branching,
    } = *args
    else {
        unreachable!()
    };
    let path = cli.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let ds = match family {
        Family::FourCycles => gen_four_cycles(count.unwrap_or(400), cli.master_seed())?,
        Family::Csl => gen_csl_sized(count.unwrap_or(15), cli.master_seed()),
        Family::TwoWl => gen_two_wl_pair(),
        Family::Ladder => {
            let mode = crossed_cells.map_or(Crossing::Density(density), Crossing::Fixed);
            gen_ladder(cells, mode, pairs, cli.master_seed())?
        }
        Family::Theorem8 => {
            gen_theorem8_pair(hubs, primary_depth, secondary_depth, branching, true)?.to_dataset(cli.master_seed())?
        }
        Family::Lemma4 => gen_lemma4_dataset(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::File {
            path: parent.into(),
            source,
        })?;
    }
    write(&path, &ds.to_json()?)?;
    print_json(&json!({"dataset": ds.name, "graphs": ds.items.len(), "path": path}))
}

fn train_cmd(cli: &Cli, config: &Path) -> Result<()> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read(config)?)?;
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let dir = out_dir(&cli.out)?;
    let start = std::time::Instant::now();
    let (metrics, models) = train::train_models(&cfg, cli.workers)?;
    let cell = Cell {
        label: "train".into(),
        config: cfg,
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    };
    write(&dir.join("metrics.json"), &serde_json::to_string_pretty(&cell.metrics)?)?;
    write(&dir.join("seeds.csv"), &experiments::cells_csv(std::slice::from_ref(&cell)))?;
    write(&dir.join("timing.json"), &json!({"seconds": cell.seconds}).to_string())?;
    for (s, model) in cell.metrics.seeds.iter().zip(&models) {
        write(&dir.join(format!("checkpoint-seed{}.json", s.seed)), &save_checkpoint(model)?)?;
    }
    print_json(&json!({
        "config_hash": cell.metrics.config_hash,
        "mean_test_accuracy": cell.metrics.mean_test_accuracy,
        "std_test_accuracy": cell.metrics.std_test_accuracy,
    }))
}

fn eval_cmd(cli: &Cli, checkpoint: &Path, dataset: &Path, rollouts: usize) -> Result<()> {
    if rollouts == 0 {
        return Err(CliError::Usage("--rollouts must be positive".into()));
    }
    let model = load_checkpoint(&read(checkpoint)?)?;
    let ds = read_dataset(dataset)?;
    let acc = train::accuracy(&model, &ds.items, 50, rollouts, cli.master_seed(), 0)?;
    let report = json!({"dataset": ds.name, "graphs": ds.items.len(), "rollouts": rollouts, "accuracy": acc});
    if let Some(out) = &cli.out {
        let dir = out_dir(&Some(out.clone()))?;
        write(&dir.join("eval.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    print_json(&report)
}

fn grid_cmd(cli: &Cli, config: &Path, axes: &Path) -> Result<()> {
    let base: ExperimentConfig = serde_json::from_str(&read(config)?)?;
    let axes: GridAxes = serde_json::from_str(&read(axes)?)?;
    base.validate()?;
    let dir = out_dir(&cli.out)?;
    let grid = experiments::grid_search(&base, &axes, cli.workers)?;
    experiments::write_cells(&dir, "grid", &grid.cells)?;
    let best = &grid.cells[grid.best];
    write(&dir.join("best.json"), &serde_json::to_string_pretty(&best.config)?)?;
    print_json(&json!({"best": best.label, "mean_test_accuracy": best.metrics.mean_test_accuracy, "cells": summarize(&grid.cells)}))
}

fn theory_cmd(cli: &Cli, fast: bool) -> Result<()> {
    let checks = if fast {
        theory::fast_checks(cli.master_seed())?
    } else {
        theory::theory_suite(cli.master_seed(), cli.workers)?
    };
    let report = serde_json::to_value(&checks)?;
    if let Some(out) = &cli.out {
        let dir = out_dir(&Some(out.clone()))?;
        write(&dir.join("theory.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    print_json(&report)
}

fn heatmap_cmd(cli: &Cli, checkpoint: &Path, graph: Option<&Path>, dataset: Option<&Path>) -> Result<()> {
    let model = load_checkpoint(&read(checkpoint)?)?;
    let graphs: Vec<Graph> = match (graph, dataset) {
        (Some(g), _) => vec![read_graph(g)?],
        (None, Some(d)) => read_dataset(d)?.items.into_iter().map(|i| i.graph).collect(),
        (None, None) => return Err(CliError::Usage("one of --graph or --dataset is required".into())),
    };
    let dir = out_dir(&cli.out)?;
    let refs: Vec<&Graph> = graphs.iter().collect();
    let (_, visits) = model.predict(&refs, &mut SeededNoise::new(cli.master_seed(), 0))?;
    for (i, counts) in visits.iter().enumerate() {
        let mut csv = String::from("node_id,visit_count\n");
        for (v, c) in counts.iter().enumerate() {
            csv.push_str(&format!("{v},{c}\n"));
        }
        write(&dir.join(format!("heatmap-{i}.csv")), &csv)?;
    }
    print_json(&json!({"graphs": visits.len()}))
}

fn grad_check_cmd(cli: &Cli) -> Result<()> {
    let ops = suite::op_checks(cli.master_seed())?;
    let rollouts = [Variant::Full, Variant::Simplified]
        .into_iter()
        .map(|v| rollout_grad_check(v, cli.master_seed()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = json!({
        "ops": ops.iter().map(|c| json!({
            "name": c.name, "max_rel_error": c.max_rel_error, "checked": c.checked, "pass": c.max_rel_error < 1e-6,
        })).collect::<Vec<_>>(),
        "rollouts": rollouts.iter().map(|r| json!({
            "variant": r.variant,
            "max_rel_error": r.report.max_rel_error,
            "checked": r.report.checked,
            "excluded": r.report.excluded.len(),
            "policy_params_without_gradient": r.policy_params_without_gradient,
            "pass": r.report.max_rel_error < 1e-4 && r.policy_params_without_gradient.is_empty(),
        })).collect::<Vec<_>>(),
        "one_hot_failures": suite::non_one_hot_draws(cli.master_seed(), 10_000)?,
        "closed_form_deviation": suite::closed_form_deviation()?,
    });
    if let Some(out) = &cli.out {
        let dir = out_dir(&Some(out.clone()))?;
        write(&dir.join("grad_check.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    print_json(&report)
}

fn oracle_cmd(query: &OracleQuery) -> Result<()> {
    let report = match query {
        OracleQuery::Cliques { graph, node } => {
            let g = read_graph(graph)?;
            g.check_node(*node)?;
            let sizes: Vec<_> = (2..=g.degree(*node) + 1)
                .map(|s| oracles::count_cliques_at(&g, *node, s).map(|c| json!({"size": s, "count": c})))
                .collect::<std::result::Result<_, _>>()?;
            let walk = walks::clique_count_walk(&g, *node)?;
            json!({"node": node, "cliques": sizes, "walk_steps": walk.steps})
        }
        OracleQuery::Cycles { graph, node, length } => {
            let g = read_graph(graph)?;
            let count = oracles::count_cycles_through(&g, *node, *length)?;
            json!({"node": node, "length": length, "count": count})
        }
        OracleQuery::Neighborhood { graph, node, radius } => {
            let g = read_graph(graph)?;
            let (ball, ids) = oracles::r_hop_neighborhood(&g, *node, *radius)?;
            let walk = walks::iddfs_traverse(&g, *node, *radius)?;
            json!({
                "node": node,
                "radius": radius,
                "ball_nodes": ids,
                "ball_edges": ball.edge_count(),
                "walk_steps": walk.moves(),
            })
        }
        OracleQuery::Wl { graph, other } => {
            let (a, b) = (read_graph(graph)?, read_graph(other)?);
            json!({
                "wl_indistinguishable": iso::wl_indistinguishable(&a, &b)?,
                "isomorphic": iso::is_isomorphic_small(&a, &b)?,
            })
        }
    };
    print_json(&report)
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    match &cli.command {
        c @ Command::GenerateDataset { .. } => generate(cli, c),
        Command::Train { config } => train_cmd(cli, config),
        Command::Eval {
            checkpoint,
            dataset,
            rollouts,
        } => eval_cmd(cli, checkpoint, dataset, *rollouts),
        Command::Grid { config, axes } => grid_cmd(cli, config, axes),
        Command::TheoryCheck { fast } => theory_cmd(cli, *fast),
        Command::Fig3 { sweep, sizes } => {
            out_dir(&cli.out)?;
            let cells = experiments::run_fig3_density_sweep(sizes, sweep.scale.into(), &sweep.seed_list(cli.master_seed()), cli.workers)?;
            finish_sweep(&cli.out, "fig3", &cells)
        }
        Command::Table1 { sweep } => {
            out_dir(&cli.out)?;
            let cells = experiments::run_table1(sweep.scale.into(), &sweep.seed_list(cli.master_seed()), cli.workers)?;
            finish_sweep(&cli.out, "table1", &cells)
        }
        Command::AblationJ { sweep, tasks } => {
            out_dir(&cli.out)?;
            let tasks: Vec<Task> = tasks.iter().map(|&t| t.into()).collect();
            let cells = experiments::run_appendix_j(&tasks, sweep.scale.into(), &sweep.seed_list(cli.master_seed()), cli.workers)?;
            finish_sweep(&cli.out, "ablation_j", &cells)
        }
        Command::AgentSweep { sweep, task } => {
            out_dir(&cli.out)?;
            let cells = experiments::run_agent_sweep((*task).into(), sweep.scale.into(), &sweep.seed_list(cli.master_seed()), cli.workers)?;
            finish_sweep(&cli.out, "agent_sweep", &cells)
        }
        Command::Heatmap {
            checkpoint,
            graph,
            dataset,
        } => heatmap_cmd(cli, checkpoint, graph.as_deref(), dataset.as_deref()),
        Command::GradCheck => grad_check_cmd(cli),
        Command::Oracle { query } => oracle_cmd(query),
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            error_line("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
