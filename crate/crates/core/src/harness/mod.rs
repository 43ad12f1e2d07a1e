//! Batch experiment runner.
//!
//! [`run`] executes one task from an [`ExperimentConfig`] and writes
//! `results.json`, the task's CSV/JSON artifacts and a `timing.json` sidecar
//! into the output directory. `results.json` holds no wall-clock data, so the
//! same config and seed give the same bytes. Every file is written to a
//! temporary name first and renamed into place.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::belief::{Grid, SimplexBelief};
use crate::dp::{evaluate_greedy, solve_finite_horizon, DpOptions, DEFAULT_NODE_BUDGET, DEFAULT_PRUNE};
use crate::error::{Error, Result};
use crate::horizon::{
    build_pieced_policy, discounted_value_iteration, invariance_residual, occupation_measure, piecing_schedule,
    policy_candidates, rollout, simplex_grid_2, Binning, PiecedPolicy, Policy, RandomizedStationaryPolicy,
    RolloutOptions, ViOptions,
};
use crate::oracle::{brute_force_finite, exhaustive_admissible_search};
use crate::problem::{CodingProblem, FiniteProblem, GridProblem};
use crate::quantizer::{
    enumerate_finite_partitions, enumerate_interval_candidates, FinitePartition, IntervalCandidateSpec,
    IntervalQuantizer, Quantizer,
};
use crate::source::{normal_pdf, FiniteChain, LinearGaussianSource};

pub use config::{ExperimentConfig, ModelSpec, PolicySpec, Task};
use config::{missing, FiniteInitial};

/// Residual bound checked on every emitted policy tree.
pub const BELLMAN_TOL: f64 = 1e-9;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub task: Option<Task>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    BudgetExceeded,
    Failed,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub task: Task,
    pub status: Status,
    pub out_dir: PathBuf,
    /// One-line human summary.
    pub message: String,
    pub results: Value,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::BudgetExceeded | Status::Failed => 1,
        }
    }
}

struct TaskOutput {
    status: Status,
    message: String,
    summary: Value,
    tolerances: Value,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl TaskOutput {
    fn ok(message: String, summary: Value, tolerances: Value) -> Self {
        Self {
            status: Status::Ok,
            message,
            summary,
            tolerances,
            artifacts: Vec::new(),
        }
    }

    fn artifact(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.artifacts.push((name.to_string(), bytes));
        self
    }
}

/// Loads `path` and runs it; see [`run`].
pub fn run_file(path: &Path, options: &RunOptions) -> Result<RunOutcome> {
    run(ExperimentConfig::load(path)?, options)
}

/// Runs one experiment. Configuration problems come back as `Err`; numerical
/// failures (budget, convergence) still write `results.json` with a non-`ok`
/// status.
pub fn run(mut config: ExperimentConfig, options: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let task = config.resolve_task(options.task)?;
    if options.seed.is_some() {
        config.seed = options.seed;
    }
    if options.budget.is_some() {
        config.budget = options.budget;
    }
    if task.is_stochastic() {
        config.require_seed(task)?;
    }
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    config.task = Some(task);
    config.out_dir = None;
    let echo = serde_json::to_value(&config)?;
    let input_hash = content_hash(&serde_json::to_vec(&echo)?);

    let output = match execute(task, &config) {
        Ok(o) => o,
        Err(e) if e.is_config_error() => return Err(e),
        Err(e) => {
            let (status, bound) = match &e {
                Error::BudgetExceeded { upper_bound, .. } => (Status::BudgetExceeded, *upper_bound),
                _ => (Status::Failed, None),
            };
            TaskOutput {
                status,
                message: format!("{}: {e}", task.name()),
                summary: json!({ "error": e.to_string(), "upper_bound": bound }),
                tolerances: json!({}),
                artifacts: Vec::new(),
            }
        }
    };

    fs::create_dir_all(&out_dir)?;
    let mut names = Vec::new();
    for (name, bytes) in &output.artifacts {
        write_atomic(&out_dir, name, bytes)?;
        names.push(name.clone());
    }
    let results = json!({
        "task": task.name(),
        "status": output.status,
        "config": echo,
        "input_hash": { "algorithm": "sha256 over \"blob <len>\\0\" + config echo", "value": input_hash },
        "tolerances": output.tolerances,
        "summary": output.summary,
        "artifacts": names,
        "timing_file": "timing.json",
    });
    let mut bytes = serde_json::to_vec_pretty(&results)?;
    bytes.push(b'\n');
    write_atomic(&out_dir, "results.json", &bytes)?;
    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let timing = json!({
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "finished_unix": finished,
    });
    write_atomic(&out_dir, "timing.json", &serde_json::to_vec_pretty(&timing)?)?;
    Ok(RunOutcome {
        task,
        status: output.status,
        out_dir,
        message: output.message,
        results,
    })
}

/// Hex SHA-256 of `blob <len>\0<bytes>`, the git object header applied to a
/// stronger hash.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `dir/name` via a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

enum Built {
    Finite(FiniteProblem, Vec<FinitePartition>),
    Gaussian(GridProblem, Vec<IntervalQuantizer>),
}

fn build(config: &ExperimentConfig, task: Task) -> Result<Built> {
    let model = config.require_model()?;
    let qs = config.quantizers.ok_or_else(|| missing("quantizers", task))?;
    match model {
        ModelSpec::Finite {
            transition,
            support,
            initial,
        } => {
            let n = transition.len();
            let placeholder = SimplexBelief::uniform(n.max(1));
            let support = support.clone().unwrap_or_else(|| (0..n).map(|i| i as f64).collect());
            let chain = FiniteChain::with_support(transition.clone(), placeholder, support)?;
            let start = match initial {
                FiniteInitial::Uniform => SimplexBelief::uniform(n),
                FiniteInitial::Stationary => chain.invariant_distribution()?,
                FiniteInitial::Probs(p) => SimplexBelief::new(p.clone())?,
            };
            let chain = chain.with_initial(start)?;
            let problem = FiniteProblem::new(chain, config.cost.clone())?;
            let candidates = enumerate_finite_partitions(n, qs.levels)?;
            Ok(Built::Finite(problem, candidates))
        }
        ModelSpec::LinearGaussian { a, sigma, initial, grid } => {
            if config.cost != crate::cost::CostModel::Quadratic {
                return Err(Error::Config("continuous models support only `kind = \"quadratic\"` costs".into()));
            }
            let source = LinearGaussianSource::new(*a, *sigma, *initial)?;
            let problem = match grid {
                Some(g) => GridProblem::new(source, Grid::new(g.lo, g.hi, g.points)?)?,
                None => GridProblem::with_default_grid(source)?,
            };
            let spec = IntervalCandidateSpec {
                levels: qs.levels,
                lo: qs.lo.ok_or_else(|| Error::Config("missing field `quantizers.lo`".into()))?,
                hi: qs.hi.ok_or_else(|| Error::Config("missing field `quantizers.hi`".into()))?,
                steps: qs.steps.ok_or_else(|| Error::Config("missing field `quantizers.steps`".into()))?,
            };
            let candidates = enumerate_interval_candidates(&spec)?;
            Ok(Built::Gaussian(problem, candidates))
        }
    }
}

fn dp_options(config: &ExperimentConfig) -> DpOptions {
    DpOptions {
        node_budget: config.budget.unwrap_or(DEFAULT_NODE_BUDGET),
        prune: config.design.and_then(|d| d.prune).unwrap_or(DEFAULT_PRUNE),
        parallel: true,
    }
}

fn execute(task: Task, config: &ExperimentConfig) -> Result<TaskOutput> {
    if task == Task::Schedule {
        return schedule_task(config);
    }
    match build(config, task)? {
        Built::Finite(p, c) => match task {
            Task::OracleCheck => oracle_task(&p, &c, config),
            Task::DiscountedVi => {
                if p.chain().len() != 2 {
                    return Err(Error::Config(
                        "discounted-vi on finite chains needs exactly two states (simplex grid)".into(),
                    ));
                }
                let spec = config.discounted.ok_or_else(|| missing("discounted", task))?;
                let grid = simplex_grid_2(spec.points)?;
                vi_task(&p, &grid, &c, config, false)
            }
            _ => generic_task(task, &p, &c, config, Binning::finite_default(p.chain().support())),
        },
        Built::Gaussian(p, c) => match task {
            Task::OracleCheck => Err(Error::Config(
                "oracle-check needs a finite model (continuous beliefs cannot be enumerated)".into(),
            )),
            Task::DiscountedVi => {
                let spec = config.discounted.ok_or_else(|| missing("discounted", task))?;
                let grid = gaussian_belief_grid(&p, spec.points, spec.std_points.unwrap_or(1))?;
                vi_task(&p, &grid, &c, config, true)
            }
            _ => {
                let s = p.source().stationary_std().unwrap_or(1.0);
                generic_task(task, &p, &c, config, Binning::continuous_default(s))
            }
        },
    }
}

fn generic_task<P: CodingProblem>(
    task: Task,
    problem: &P,
    candidates: &[P::Quantizer],
    config: &ExperimentConfig,
    default_binning: Binning,
) -> Result<TaskOutput> {
    match task {
        Task::Design => design_task(problem, candidates, config),
        Task::Rollout => rollout_task(problem, candidates, config, default_binning),
        Task::Occupancy => occupancy_task(problem, candidates, config, default_binning),
        _ => unreachable!("dispatched elsewhere"),
    }
}

fn design_task<P: CodingProblem>(problem: &P, candidates: &[P::Quantizer], config: &ExperimentConfig) -> Result<TaskOutput> {
    let spec = config.design.ok_or_else(|| missing("design", Task::Design))?;
    let opts = dp_options(config);
    let root = problem.initial_belief()?;
    let sol = solve_finite_horizon(problem, &root, candidates, spec.horizon, opts)?;
    let check = sol.tree.check_bellman();
    let greedy = evaluate_greedy(problem, &root, candidates, spec.horizon, opts.prune)?;
    let mut csv = Vec::new();
    sol.tree.write_csv(&mut csv)?;
    let status = if check.max_residual <= BELLMAN_TOL {
        Status::Ok
    } else {
        Status::Failed
    };
    let summary = json!({
        "value": sol.value,
        "horizon": spec.horizon,
        "candidates": candidates.len(),
        "nodes_evaluated": sol.nodes_evaluated,
        "tree_nodes": sol.tree.nodes.len(),
        "bellman_max_residual": check.max_residual,
        "branch_prob_max_deficit": check.max_prob_deficit,
        "pruned_value_bound": sol.pruned_value_bound,
        "greedy_value": greedy,
        "root_quantizer": sol.tree.root_node().quantizer.to_any(),
    });
    let mut out = TaskOutput::ok(
        format!(
            "design: J = {:.6} over T = {} ({} tree nodes, greedy {:.6})",
            sol.value,
            spec.horizon,
            sol.tree.nodes.len(),
            greedy
        ),
        summary,
        json!({ "bellman": BELLMAN_TOL, "prune": opts.prune, "node_budget": opts.node_budget }),
    )
    .artifact("policy_tree.csv", csv)
    .artifact("policy_tree.json", serde_json::to_vec(&sol.tree)?);
    out.status = status;
    Ok(out)
}

fn build_policy<P: CodingProblem>(
    problem: &P,
    candidates: &[P::Quantizer],
    spec: &PolicySpec,
    config: &ExperimentConfig,
    binning: &Binning,
) -> Result<(Policy<P::Belief, P::Quantizer>, Value)> {
    let opts = dp_options(config);
    let root = problem.initial_belief()?;
    match spec {
        PolicySpec::Dp { horizon } => {
            let sol = solve_finite_horizon(problem, &root, candidates, *horizon, opts)?;
            let info = json!({ "dp_value": sol.value, "horizon": horizon });
            Ok((Policy::Pieced(PiecedPolicy::replay(sol.tree, candidates.to_vec())), info))
        }
        PolicySpec::Greedy => Ok((
            Policy::Greedy {
                candidates: candidates.to_vec(),
            },
            json!({}),
        )),
        PolicySpec::Fixed { quantizer } => {
            let q = candidates.get(*quantizer).ok_or_else(|| {
                Error::Config(format!(
                    "policy.quantizer = {quantizer} but only {} candidates exist",
                    candidates.len()
                ))
            })?;
            Ok((
                Policy::Fixed { quantizer: q.clone() },
                json!({ "quantizer": q.to_any() }),
            ))
        }
        PolicySpec::Pieced { horizons, k_max } => {
            let schedule = piecing_schedule(horizons, *k_max)?;
            let mut trees = Vec::new();
            let mut values = Vec::new();
            for &t in &schedule.horizons {
                let sol = solve_finite_horizon(problem, &root, candidates, t as usize, opts)?;
                values.push(sol.value);
                trees.push(sol.tree);
            }
            let weighted = values
                .iter()
                .zip(&schedule.segment_lengths)
                .map(|(v, l)| v * *l as f64)
                .sum::<f64>()
                / schedule.total_length() as f64;
            let pieced = build_pieced_policy(problem, trees, &schedule, candidates.to_vec())?;
            let info = json!({
                "schedule": schedule,
                "segment_values": values,
                "schedule_weighted_value": weighted,
            });
            Ok((Policy::Pieced(pieced), info))
        }
        PolicySpec::Randomized { row } => {
            let rp = RandomizedStationaryPolicy::uniform_rows(binning.clone(), row.clone(), candidates.to_vec())?;
            Ok((Policy::Randomized(rp), json!({ "row": row })))
        }
    }
}

fn rollout_task<P: CodingProblem>(
    problem: &P,
    candidates: &[P::Quantizer],
    config: &ExperimentConfig,
    binning: Binning,
) -> Result<TaskOutput> {
    let spec = config.rollout.as_ref().ok_or_else(|| missing("rollout", Task::Rollout))?;
    let seed = config.require_seed(Task::Rollout)?;
    let (policy, info) = build_policy(problem, candidates, &spec.policy, config, &binning)?;
    let root = problem.initial_belief()?;
    let r = rollout(
        problem,
        &policy,
        &root,
        RolloutOptions {
            steps: spec.steps,
            paths: spec.paths,
            seed,
            log_trajectory: true,
        },
    )?;
    let mut traj = Vec::new();
    r.write_trajectory_csv(&mut traj)?;
    let mut cesaro = Vec::new();
    r.write_cesaro_csv(&mut cesaro)?;
    let summary = json!({
        "mean_cost": r.mean,
        "std_error": r.std_error,
        "paths": spec.paths,
        "steps": spec.steps,
        "final_running_average": r.cesaro.last(),
        "policy": info,
    });
    Ok(TaskOutput::ok(
        format!("rollout: mean cost {:.6} +- {:.2e} over {} paths", r.mean, r.std_error, spec.paths),
        summary,
        json!({ "consistency_standard_errors": 3.0 }),
    )
    .artifact("trajectory.csv", traj)
    .artifact("cesaro.csv", cesaro))
}

fn occupancy_task<P: CodingProblem>(
    problem: &P,
    candidates: &[P::Quantizer],
    config: &ExperimentConfig,
    default_binning: Binning,
) -> Result<TaskOutput> {
    let spec = config.occupancy.as_ref().ok_or_else(|| missing("occupancy", Task::Occupancy))?;
    let seed = config.require_seed(Task::Occupancy)?;
    let binning = spec.binning.clone().unwrap_or(default_binning);
    binning.validate()?;
    let (policy, info) = build_policy(problem, candidates, &spec.policy, config, &binning)?;
    let root = problem.initial_belief()?;
    let hist = occupation_measure(problem, &policy, &root, spec.steps, seed, &binning)?;
    let residual = invariance_residual(problem, &hist, &policy_candidates(&policy))?;
    let summary = hist.summary();
    let out = json!({
        "invariance_residual": residual,
        "time_averaged_cost": summary.time_averaged_cost,
        "occupied_cells": summary.cells.len(),
        "steps": spec.steps,
        "policy": info,
    });
    Ok(TaskOutput::ok(
        format!(
            "occupancy: invariance residual {residual:.4}, average cost {:.6}",
            summary.time_averaged_cost
        ),
        out,
        json!({ "invariance_residual_diagnostic": 0.1 }),
    )
    .artifact("histogram.json", serde_json::to_vec_pretty(&summary)?))
}

fn oracle_task(problem: &FiniteProblem, candidates: &[FinitePartition], config: &ExperimentConfig) -> Result<TaskOutput> {
    let spec = config.oracle.as_ref().ok_or_else(|| missing("oracle", Task::OracleCheck))?;
    let chain = problem.chain();
    let levels = config.quantizers.map(|q| q.levels).unwrap_or(2);
    let root = chain.initial().clone();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &t in &spec.horizons {
        let dp = solve_finite_horizon(problem, &root, candidates, t, dp_options(config))?;
        let bf = brute_force_finite(&root, chain, levels, t, problem.cost())?;
        let admissible = if chain.len() <= 3 && levels <= 2 && t <= 2 {
            Some(exhaustive_admissible_search(&root, chain, levels, t, problem.cost())?)
        } else {
            None
        };
        let mut dj = (dp.value - bf).abs();
        if let Some(a) = admissible {
            dj = dj.max((dp.value - a).abs());
        }
        worst = worst.max(dj);
        rows.push(json!({
            "horizon": t,
            "dp": dp.value,
            "brute_force": bf,
            "admissible": admissible,
            "abs_diff": dj,
        }));
    }
    let pass = worst <= spec.tol;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = TaskOutput::ok(
        format!("{verdict}, |ΔJ| = {worst:.1e}"),
        json!({ "pass": pass, "max_abs_diff": worst, "instances": rows }),
        json!({ "oracle": spec.tol }),
    );
    if !pass {
        out.status = Status::Failed;
    }
    Ok(out)
}

fn vi_task<P: CodingProblem>(
    problem: &P,
    grid: &[P::Belief],
    candidates: &[P::Quantizer],
    config: &ExperimentConfig,
    approximate: bool,
) -> Result<TaskOutput> {
    let spec = config.discounted.ok_or_else(|| missing("discounted", Task::DiscountedVi))?;
    let sol = discounted_value_iteration(
        problem,
        grid,
        candidates,
        ViOptions {
            beta: spec.beta,
            tol: spec.tol,
            max_iter: spec.max_iter,
        },
    )?;
    let mut csv = Vec::new();
    sol.write_csv(&mut csv)?;
    let summary = json!({
        "beta": spec.beta,
        "grid_points": grid.len(),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "min_value": sol.values.iter().copied().fold(f64::INFINITY, f64::min),
        "max_value": sol.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "approximate": approximate,
    });
    Ok(TaskOutput::ok(
        format!(
            "discounted-vi: residual {:.2e} after {} iterations{}",
            sol.residual,
            sol.iterations,
            if approximate { " (approximate: grid bias unquantified)" } else { "" }
        ),
        summary,
        json!({ "vi_tol": spec.tol }),
    )
    .artifact("value_function.csv", csv))
}

fn gaussian_belief_grid(problem: &GridProblem, means: usize, stds: usize) -> Result<Vec<crate::belief::ContinuousBelief>> {
    if means == 0 || stds == 0 {
        return Err(Error::Config("discounted.points and std_points must be >= 1".into()));
    }
    let source = problem.source();
    let s_max = source.stationary_std()?;
    let s_min = source.noise_std();
    let lin = |lo: f64, hi: f64, n: usize, i: usize| if n == 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(means * stds);
    for i in 0..means {
        let m = lin(-3.0 * s_max, 3.0 * s_max, means, i);
        for j in 0..stds {
            let s = lin(s_min, s_max, stds, j);
            out.push(problem.density(|x| normal_pdf(x, m, s))?);
        }
    }
    Ok(out)
}

fn schedule_task(config: &ExperimentConfig) -> Result<TaskOutput> {
    let spec = config.schedule.as_ref().ok_or_else(|| missing("schedule", Task::Schedule))?;
    let s = piecing_schedule(&spec.horizons, spec.k_max)?;
    let violations = s.violations(&spec.horizons);
    let mut csv = String::from("k,T_k,n_k,T_prime_k,N_k,tail_ratio\n");
    for k in 0..s.k_max() {
        let ratio = if k == 0 { String::new() } else { s.tail_ratios[k - 1].to_string() };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k + 1,
            s.horizons[k],
            s.repetitions[k],
            s.segment_lengths[k],
            s.boundaries[k],
            ratio
        ));
    }
    let mut out = TaskOutput::ok(
        format!("schedule: n = {:?}, T' = {:?}, N = {:?}", s.repetitions, s.segment_lengths, s.boundaries),
        json!({ "schedule": s, "violations": violations }),
        json!({}),
    )
    .artifact("schedule.json", serde_json::to_vec_pretty(&s)?)
    .artifact("schedule.csv", csv.into_bytes());
    if !violations.is_empty() {
        out.status = Status::Failed;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT: &str = r#"
        task = "oracle-check"
        [model]
        kind = "finite"
        transition = [[0.9, 0.1], [0.2, 0.8]]
        initial = "uniform"
        [quantizers]
        levels = 2
        [oracle]
        horizons = [1, 2, 3]
        [design]
        horizon = 3
        [schedule]
        horizons = [2, 4, 8, 16]
        k_max = 3
        [rollout]
        steps = 3
        paths = 200
        policy = { kind = "dp", horizon = 3 }
        "#;

    fn opts(dir: &Path, task: Task) -> RunOptions {
        RunOptions {
            task: Some(task),
            out_dir: Some(dir.to_path_buf()),
            ..RunOptions::default()
        }
    }

    #[test]
    fn oracle_check_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml(DEFAULT).unwrap();
        let out = run(cfg, &opts(dir.path(), Task::OracleCheck)).unwrap();
        assert_eq!(out.message, "PASS, |ΔJ| = 0.0e0");
        assert_eq!(out.exit_code(), 0);
    }

    #[test]
    fn schedule_task_writes_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(DEFAULT).unwrap();
        cfg.task = None;
        let out = run(cfg, &opts(dir.path(), Task::Schedule)).unwrap();
        assert_eq!(out.results["summary"]["schedule"]["repetitions"], json!([1, 4, 6]));
        let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
        assert!(csv.contains("\n3,8,6,48,66,"));
    }

    #[test]
    fn task_conflict_and_missing_seed_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml(DEFAULT).unwrap();
        let e = run(cfg.clone(), &opts(dir.path(), Task::Design)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let mut cfg = cfg;
        cfg.task = None;
        let e = run(cfg, &opts(dir.path(), Task::Rollout)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("`seed`"));
        assert!(!dir.path().join("results.json").exists());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(DEFAULT).unwrap();
        cfg.task = None;
        let mut o = opts(dir.path(), Task::Design);
        o.budget = Some(3);
        let out = run(cfg, &o).unwrap();
        assert_eq!(out.status, Status::BudgetExceeded);
        assert_eq!(out.exit_code(), 1);
        assert!(out.results["summary"]["upper_bound"].is_f64());
        assert!(dir.path().join("results.json").exists());
    }

    #[test]
    fn rollout_is_byte_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(DEFAULT).unwrap();
        cfg.task = None;
        for d in [&a, &b] {
            let mut o = opts(d.path(), Task::Rollout);
            o.seed = Some(5);
            run(cfg.clone(), &o).unwrap();
        }
        let ra = fs::read(a.path().join("results.json")).unwrap();
        let rb = fs::read(b.path().join("results.json")).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(
            fs::read(a.path().join("trajectory.csv")).unwrap(),
            fs::read(b.path().join("trajectory.csv")).unwrap()
        );
    }

    #[test]
    fn content_hash_matches_git_header_convention() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
