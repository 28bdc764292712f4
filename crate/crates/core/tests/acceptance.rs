//! Acceptance run: one PASS/FAIL line per criterion, with per-cell detail
//! lines indented underneath. Exits nonzero only if a criterion could not be
//! computed.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use agentnet_autodiff::suite;
use agentnet_core::checks::rollout_grad_check;
use agentnet_core::experiments::{
    ladder_config, run_cell, task_config, Cell, CrossingMode, Scale, Task, ABLATIONS, LADDER_SIZES, VARIANTS,
};
use agentnet_core::{train, ExperimentConfig, Variant};
use agentnet_graph::iso::wl_indistinguishable;
use agentnet_graph::theory::{self, TheoryCheck};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const SEEDS: u64 = 10;
const THEORY_SEED: u64 = 7;

struct Runner {
    workers: usize,
    cache: HashMap<String, Cell>,
    started: Instant,
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").expect("stdout");
    out.flush().expect("stdout");
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Simplified => "simplified",
        Variant::RandomWalk => "random-walk",
    }
}

impl Runner {
    /// Trains `cfg` on seeds 0..10 once per distinct config.
    fn cell(&mut self, label: &str, mut cfg: ExperimentConfig) -> Result<f64> {
        cfg.seeds = (0..SEEDS).collect();
        let key = cfg.hash();
        if !self.cache.contains_key(&key) {
            let cell = run_cell(label, cfg, self.workers)?;
            say(&format!(
                "    {label}: {:.3} ± {:.3} (train {:.3}, {:.0}s, {:.0}s elapsed)",
                cell.metrics.mean_test_accuracy,
                cell.metrics.std_test_accuracy,
                cell.metrics.mean_train_accuracy,
                cell.seconds,
                self.started.elapsed().as_secs_f64()
            ));
            self.cache.insert(key.clone(), cell);
        }
        Ok(self.cache[&key].metrics.mean_test_accuracy)
    }
}

fn theory_line(n: usize, title: &str, checks: &[TheoryCheck]) {
    let pass = checks.iter().all(|c| c.pass);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {} {} {}", c.name, c.observed, c.relation, c.bound))
        .collect();
    say(&format!("{} {n} {title}: {}", verdict(pass), detail.join("; ")));
}

fn benchmark_table(r: &mut Runner) -> Result<()> {
    let mut acc = HashMap::new();
    for task in Task::ALL {
        for v in VARIANTS {
            let label = format!("{}/{}", task.name(), variant_name(v));
            acc.insert((task, v), r.cell(&label, task_config(task, v, Scale::Desk))?);
        }
    }
    let mut failures = Vec::new();
    for task in Task::ALL {
        for v in [Variant::Full, Variant::Simplified] {
            if acc[&(task, v)] < 0.99 {
                failures.push(format!("{} {} {:.3} < 0.99", variant_name(v), task.name(), acc[&(task, v)]));
            }
        }
    }
    for task in [Task::FourCycles, Task::Csl] {
        let a = acc[&(task, Variant::RandomWalk)];
        if a < 0.99 {
            failures.push(format!("random-walk {} {a:.3} < 0.99", task.name()));
        }
    }
    let rw = acc[&(Task::TwoWl, Variant::RandomWalk)];
    if (rw - 0.5).abs() > 0.10 {
        failures.push(format!("random-walk two-wl {rw:.3} outside 0.50 ± 0.10"));
    }

    let ds = Task::FourCycles.dataset().generate()?;
    let mut pairs: HashMap<usize, Vec<&agentnet_graph::Graph>> = HashMap::new();
    for item in &ds.items {
        pairs.entry(item.group).or_default().push(&item.graph);
    }
    let mut certified = 0;
    for graphs in pairs.values() {
        if graphs.len() == 2 && wl_indistinguishable(graphs[0], graphs[1])? {
            certified += 1;
        }
    }
    if certified != pairs.len() {
        failures.push(format!("only {certified}/{} four-cycle pairs are 1-WL equivalent", pairs.len()));
    }

    let table: Vec<String> = Task::ALL
        .iter()
        .map(|&t| {
            let row: Vec<String> = VARIANTS.iter().map(|&v| format!("{} {:.3}", variant_name(v), acc[&(t, v)])).collect();
            format!("{} [{}]", t.name(), row.join(", "))
        })
        .collect();
    say(&format!(
        "{} 1 benchmark table, 10 seeds: {}; {certified}/{} four-cycle pairs 1-WL equivalent{}",
        verdict(failures.is_empty()),
        table.join("; "),
        pairs.len(),
        if failures.is_empty() { String::new() } else { format!("; misses: {}", failures.join(", ")) }
    ));
    Ok(())
}

fn ablations(r: &mut Runner) -> Result<()> {
    let mut acc = HashMap::new();
    for task in [Task::Csl, Task::TwoWl] {
        for (name, ablation) in ABLATIONS {
            let mut cfg = task_config(task, Variant::Full, Scale::Desk);
            cfg.model.ablations = ablation;
            acc.insert((task, name), r.cell(&format!("{}/{name}", task.name()), cfg)?);
        }
    }
    let blind = "no-node-update-neighborhood-for-all";
    let mut failures = Vec::new();
    let csl_blind = acc[&(Task::Csl, blind)];
    if (csl_blind - 0.10).abs() > 0.05 {
        failures.push(format!("csl {blind} {csl_blind:.3} outside 0.10 ± 0.05"));
    }
    let wl_blind = acc[&(Task::TwoWl, blind)];
    if (wl_blind - 0.50).abs() > 0.05 {
        failures.push(format!("two-wl {blind} {wl_blind:.3} outside 0.50 ± 0.05"));
    }
    for task in [Task::Csl, Task::TwoWl] {
        let full = acc[&(task, "full")];
        if full < 0.99 {
            failures.push(format!("{} full {full:.3} < 0.99", task.name()));
        }
    }
    let order = ["full", "no-node-update", "no-neighborhood-update"];
    let chain: Vec<f64> = order.iter().map(|n| acc[&(Task::TwoWl, *n)]).chain([0.5]).collect();
    if chain.windows(2).any(|w| w[0] < w[1]) {
        failures.push(format!("two-wl ordering full ≥ no-node ≥ no-neighborhood ≥ 0.5 broken: {chain:?}"));
    }
    let rows: Vec<String> = [Task::Csl, Task::TwoWl]
        .iter()
        .map(|&t| {
            let row: Vec<String> = ABLATIONS.iter().map(|(n, _)| format!("{n} {:.3}", acc[&(t, *n)])).collect();
            format!("{} [{}]", t.name(), row.join(", "))
        })
        .collect();
    say(&format!(
        "{} 2 update-step ablations, 10 seeds: {}{}",
        verdict(failures.is_empty()),
        rows.join("; "),
        if failures.is_empty() { String::new() } else { format!("; misses: {}", failures.join(", ")) }
    ));
    Ok(())
}

fn ladder_sweep(r: &mut Runner) -> Result<()> {
    let mut acc = HashMap::new();
    for mode in [CrossingMode::Density, CrossingMode::FixedTwo] {
        for n in LADDER_SIZES {
            let label = format!("ladders/{}/{n}", mode.name());
            acc.insert((mode, n), r.cell(&label, ladder_config(n, mode, Scale::Desk))?);
        }
    }
    let mut failures = Vec::new();
    for n in LADDER_SIZES {
        let a = acc[&(CrossingMode::Density, n)];
        if a < 0.95 {
            failures.push(format!("density at {n} nodes {a:.3} < 0.95"));
        }
    }
    let (d, f) = (acc[&(CrossingMode::Density, 1024)], acc[&(CrossingMode::FixedTwo, 1024)]);
    if d - f < 0.20 {
        failures.push(format!("fixed-2 at 1024 nodes only {:.3} below density", d - f));
    }
    let rows: Vec<String> = [CrossingMode::Density, CrossingMode::FixedTwo]
        .iter()
        .map(|&m| {
            let row: Vec<String> = LADDER_SIZES.iter().map(|n| format!("{n}:{:.3}", acc[&(m, *n)])).collect();
            format!("{} [{}]", m.name(), row.join(" "))
        })
        .collect();
    say(&format!(
        "{} 3 crossed-ladder size sweep, k=16, 16 steps: {}{}",
        verdict(failures.is_empty()),
        rows.join("; "),
        if failures.is_empty() { String::new() } else { format!("; misses: {}", failures.join(", ")) }
    ));
    Ok(())
}

fn numerical_integrity() -> Result<()> {
    let mut worst_op: (f64, &str) = (0.0, "");
    let mut unchecked = Vec::new();
    for seed in 0..20 {
        for c in suite::op_checks(seed)? {
            if c.max_rel_error > worst_op.0 {
                worst_op = (c.max_rel_error, c.name);
            }
            if c.checked == 0 {
                unchecked.push(c.name);
            }
        }
    }
    let mut worst_rollout: f64 = 0.0;
    let mut silent_policy = Vec::new();
    for v in [Variant::Full, Variant::Simplified] {
        let check = rollout_grad_check(v, 0)?;
        worst_rollout = worst_rollout.max(check.report.max_rel_error);
        silent_policy.extend(check.policy_params_without_gradient);
    }
    let not_one_hot = suite::non_one_hot_draws(0, 10_000)?;
    let closed = suite::closed_form_deviation()?;
    let pass = worst_op.0 < 1e-6
        && unchecked.is_empty()
        && worst_rollout < 1e-4
        && silent_policy.is_empty()
        && not_one_hot == 0
        && closed < 1e-9;
    say(&format!(
        "{} 7 numerical integrity: worst op rel. error {:.2e} ({}) < 1e-6 over 20 seeds; rollout rel. error {worst_rollout:.2e} < 1e-4, policy params without gradient {silent_policy:?}; {not_one_hot}/10000 non-one-hot draws; clip/cosine/AdamW deviation {closed:.1e} < 1e-9",
        verdict(pass),
        worst_op.0,
        worst_op.1
    ));
    Ok(())
}

fn determinism() -> Result<()> {
    let mut cfg = task_config(Task::FourCycles, Variant::Full, Scale::Desk);
    cfg.seeds = vec![3];
    cfg.training_steps = 150;
    let a = serde_json::to_vec(&train::train(&cfg, 1)?)?;
    let b = serde_json::to_vec(&train::train(&cfg, 1)?)?;
    let mut ladder = ladder_config(64, CrossingMode::Density, Scale::Desk);
    ladder.seeds = vec![1];
    ladder.training_steps = 60;
    let c = serde_json::to_vec(&train::train(&ladder, 1)?)?;
    let d = serde_json::to_vec(&train::train(&ladder, 1)?)?;
    say(&format!(
        "{} 8 determinism at one worker: four-cycles run {} bytes identical = {}, ladder run {} bytes identical = {}",
        verdict(a == b && c == d),
        a.len(),
        a == b,
        c.len(),
        c == d
    ));
    Ok(())
}

fn main() -> Result<()> {
    let workers = std::env::var("AGENTNET_WORKERS").ok().and_then(|w| w.parse().ok()).unwrap_or(1);
    let mut r = Runner {
        workers,
        cache: HashMap::new(),
        started: Instant::now(),
    };
    say(&format!("acceptance: {SEEDS} seeds per cell, desk scale, {workers} worker(s)"));
    benchmark_table(&mut r)?;
    ablations(&mut r)?;
    ladder_sweep(&mut r)?;
    theory_line(4, "walk protocol suite", &theory::fast_checks(THEORY_SEED)?);
    theory_line(5, "two agents versus one on tree hubs", &theory::check_tree_protocols(THEORY_SEED, workers)?);
    theory_line(
        6,
        "frequency distinguisher on ladders",
        &theory::check_frequency_distinguisher(THEORY_SEED, workers)?,
    );
    numerical_integrity()?;
    determinism()?;
    say(&format!("acceptance finished in {:.0}s", r.started.elapsed().as_secs_f64()));
    Ok(())
}
