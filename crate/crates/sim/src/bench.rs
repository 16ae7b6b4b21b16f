//! The benchmark runner: executes each method on each (source, target)
//! scenario with identical budgets and seeds, computes relative errors
//! against exhaustive ground truth, tracks graph-recovery diagnostics, and
//! emits a versioned JSON report, byte-stable CSVs, and static SVG plots.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use cameo_core::graph::{hamming_distance, MixedGraph};
use cameo_core::optimizer::{self, Constraint, Direction, Query, RunOptions};
use cameo_core::space::Configuration;
use cameo_core::stats::lower_median;

use crate::baselines;
use crate::env::{MedianRepeatEvaluator, ScmEnvironment, SimError};
use crate::metrics::{kl_divergence, relative_error};
use crate::plot::{self, Series};
use crate::shift::{generate_shift, shift_env, Severity, ShiftSpec};

pub const REPORT_VERSION: u32 = 1;
const KL_BINS: usize = 50;
const KL_SAMPLES: usize = 2000;
const MEASUREMENT_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cameo")]
    Cameo,
    #[serde(rename = "cold-gp-ei")]
    ColdGpEi,
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub fn parse(text: &str) -> Result<Method, SimError> {
        match text {
            "cameo" => Ok(Method::Cameo),
            "cold-gp-ei" => Ok(Method::ColdGpEi),
            "random" => Ok(Method::Random),
            other => Err(SimError::Spec(format!("unknown method `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cameo => "cameo",
            Method::ColdGpEi => "cold-gp-ei",
            Method::Random => "random",
        }
    }
}

/// One benchmark scenario: a source environment, a shift defining the
/// target, and the optimization request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Environment spec inline, or a path relative to the suite file.
    #[serde(default)]
    pub env: Option<ScmEnvironment>,
    #[serde(default)]
    pub env_file: Option<String>,
    pub objective: String,
    /// Explicit shift, or a severity for a generated one.
    #[serde(default)]
    pub shift: Option<ShiftSpec>,
    #[serde(default)]
    pub severity: Option<Severity>,
    #[serde(default)]
    pub shift_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default = "default_initial_samples")]
    pub initial_samples: usize,
    #[serde(default = "default_source_samples")]
    pub source_samples: usize,
    #[serde(default = "default_source_repeats")]
    pub source_repeats: usize,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default = "default_real_grid")]
    pub real_grid: usize,
}

fn default_budget() -> u32 {
    200
}
fn default_initial_samples() -> usize {
    10
}
fn default_source_samples() -> usize {
    2000
}
fn default_source_repeats() -> usize {
    5
}
fn default_real_grid() -> usize {
    11
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub scenarios: Vec<Scenario>,
}

pub fn load_suite(path: &Path) -> Result<Suite, SimError> {
    let text = std::fs::read_to_string(path)?;
    let suite: Suite = serde_json::from_str(&text)?;
    Ok(suite)
}

/// Hamming diagnostics at one loop iteration.
#[derive(Debug, Clone, Serialize)]
pub struct HammingPoint {
    pub iteration: u32,
    pub target: usize,
    pub source_only: usize,
    pub combined: usize,
}

/// One (scenario, method, seed) cell of the report.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub status: String,
    pub best_y: Option<f64>,
    pub y_opt: f64,
    pub final_re: Option<f64>,
    pub re_at_50: Option<f64>,
    pub evaluations: usize,
    pub constraint_violations: usize,
    pub kl_source_target: f64,
    pub wall_time_s: f64,
    pub trajectory: Vec<Option<f64>>,
    pub hamming: Vec<HammingPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub report_version: u32,
    pub suite: String,
    pub methods: Vec<String>,
    pub seeds: u64,
    pub cells: Vec<Cell>,
}

/// Union of two graphs over the target's node set; where both carry an edge
/// for a pair, the target's marks win.
pub fn combine_graphs(source: &MixedGraph, target: &MixedGraph) -> MixedGraph {
    let mut combined = target.clone();
    for (a, b, ma, mb) in source.edges() {
        let na = source.node_name(a);
        let nb = source.node_name(b);
        if let (Some(ia), Some(ib)) = (combined.node_index(na), combined.node_index(nb)) {
            if !combined.has_edge(ia, ib) {
                combined.set_edge(ia, ib, ma, mb);
            }
        }
    }
    combined
}

struct PreparedScenario {
    #[allow(dead_code)]
    source_env: ScmEnvironment,
    target_env: ScmEnvironment,
    source_data: cameo_core::data::Dataset,
    query: Query,
    y_opt: f64,
    gt_graph: MixedGraph,
    kl: f64,
}

fn prepare(scenario: &Scenario, suite_dir: &Path) -> Result<PreparedScenario, SimError> {
    let env_seed = cameo_core::stats::fnv1a(scenario.name.as_bytes());
    let source_env = match (&scenario.env, &scenario.env_file) {
        (Some(env), _) => {
            let mut env = env.clone();
            env.seed = env_seed;
            env.validate()?;
            env
        }
        (None, Some(file)) => crate::env::build_env(&suite_dir.join(file), env_seed)?,
        (None, None) => {
            return Err(SimError::Spec(format!(
                "scenario `{}` needs `env` or `env_file`",
                scenario.name
            )))
        }
    };
    let shift = match (&scenario.shift, scenario.severity) {
        (Some(spec), _) => spec.clone(),
        (None, Some(severity)) => generate_shift(&source_env, severity, scenario.shift_seed),
        (None, None) => ShiftSpec::identity(Severity::Low),
    };
    let target_env = shift_env(&source_env, &shift)?;

    let source_data =
        source_env.observe(scenario.source_samples, scenario.source_repeats, env_seed ^ 0xda7a)?;

    let mut constraints = Vec::new();
    for text in &scenario.constraints {
        constraints.push(
            Constraint::parse(text, &source_env.space)
                .map_err(|e| SimError::Spec(e.to_string()))?,
        );
    }
    let query = Query {
        objective: scenario.objective.clone(),
        direction: Direction::Minimize,
        budget_iterations: Some(scenario.budget),
        budget_seconds: None,
        constraints,
    };

    let (_, y_opt) = target_env.ground_truth_auto(&scenario.objective, scenario.real_grid)?;
    let gt_graph = target_env.ground_truth_graph();

    // KL between source and target objective samples over shared configs.
    let probe = source_env.space.sample_uniform(KL_SAMPLES, env_seed ^ 0x6011);
    let mut src_samples = Vec::with_capacity(KL_SAMPLES);
    let mut tgt_samples = Vec::with_capacity(KL_SAMPLES);
    for (i, cfg) in probe.iter().enumerate() {
        let s = source_env.evaluate(cfg, env_seed.wrapping_add(i as u64))?;
        let t = target_env.evaluate(cfg, env_seed.wrapping_add(i as u64))?;
        src_samples.push(s.objectives[&scenario.objective]);
        tgt_samples.push(t.objectives[&scenario.objective]);
    }
    let kl = kl_divergence(&src_samples, &tgt_samples, KL_BINS);

    Ok(PreparedScenario { source_env, target_env, source_data, query, y_opt, gt_graph, kl })
}

/// Noise-free re-evaluation of the returned best configuration against every
/// constraint; counts violations.
fn noise_free_violations(
    env: &ScmEnvironment,
    query: &Query,
    best: &Option<Configuration>,
) -> usize {
    let Some(cfg) = best else { return 0 };
    let Ok(objectives) = env.evaluate_noise_free(cfg) else { return query.constraints.len() };
    query.constraints.iter().filter(|c| !c.satisfied(&objectives)).count()
}

fn run_cell(
    prepared: &PreparedScenario,
    scenario: &Scenario,
    method: Method,
    seed: u64,
) -> Result<(Option<f64>, Option<Configuration>, Vec<Option<f64>>, usize, Vec<HammingPoint>), String>
{
    match method {
        Method::Cameo => {
            let options = RunOptions {
                seed,
                initial_samples: scenario.initial_samples,
                convergence_window: 0,
                ..RunOptions::default()
            };
            let evaluator =
                MedianRepeatEvaluator::new(&prepared.target_env, MEASUREMENT_REPEATS);
            let result = optimizer::run(
                prepared.query.clone(),
                &prepared.source_data,
                &evaluator,
                options,
            )
            .map_err(|e| e.to_string())?;
            let hamming = hamming_diagnostics(prepared, &result);
            Ok((
                result.best_y,
                result.best_config.clone(),
                result.best_trajectory(),
                result.evaluations,
                hamming,
            ))
        }
        Method::ColdGpEi => {
            let result = baselines::run_cold_gp_ei(
                &prepared.target_env,
                prepared.query.clone(),
                scenario.initial_samples,
                seed,
                MEASUREMENT_REPEATS,
            )
            .map_err(|e| e.to_string())?;
            Ok((
                result.best_y,
                result.best_config.clone(),
                result.best_trajectory(),
                result.evaluations,
                Vec::new(),
            ))
        }
        Method::Random => {
            let result = baselines::run_random(
                &prepared.target_env,
                &prepared.query,
                scenario.initial_samples,
                scenario.budget as usize,
                seed,
                MEASUREMENT_REPEATS,
            )?;
            Ok((
                result.best_y,
                result.best_config.clone(),
                result.trajectory,
                result.evaluations,
                Vec::new(),
            ))
        }
    }
}

fn hamming_diagnostics(
    prepared: &PreparedScenario,
    result: &cameo_core::optimizer::OptResult,
) -> Vec<HammingPoint> {
    let gt = &prepared.gt_graph;
    let source_aligned = result
        .source_graph_refined
        .as_ref()
        .and_then(|g| g.aligned_to(&gt.nodes).ok());
    let source_only = source_aligned
        .as_ref()
        .and_then(|g| hamming_distance(g, gt).ok())
        .unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for (iteration, snapshot) in &result.target_graph_snapshots {
        let Ok(aligned) = snapshot.aligned_to(&gt.nodes) else { continue };
        let Ok(target) = hamming_distance(&aligned, gt) else { continue };
        let combined = match &source_aligned {
            Some(src) => {
                let merged = combine_graphs(src, &aligned);
                hamming_distance(&merged, gt).unwrap_or(target)
            }
            None => target,
        };
        out.push(HammingPoint { iteration: *iteration, target, source_only, combined });
    }
    out
}

/// Run the full suite from a file. Per-cell failures are recorded and the
/// run continues.
pub fn run_benchmark(
    suite_path: &Path,
    methods: &[Method],
    seeds: u64,
    out_dir: &Path,
) -> Result<BenchmarkReport, SimError> {
    let suite = load_suite(suite_path)?;
    let suite_dir = suite_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    run_suite(&suite, &suite_dir, methods, seeds, out_dir)
}

/// Run an already-parsed suite; `suite_dir` anchors relative `env_file`
/// paths.
pub fn run_suite(
    suite: &Suite,
    suite_dir: &Path,
    methods: &[Method],
    seeds: u64,
    out_dir: &Path,
) -> Result<BenchmarkReport, SimError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("plots"))?;

    let mut cells = Vec::new();
    for scenario in &suite.scenarios {
        let prepared = match prepare(scenario, &suite_dir) {
            Ok(p) => p,
            Err(e) => {
                for method in methods {
                    for seed in 0..seeds {
                        cells.push(Cell {
                            scenario: scenario.name.clone(),
                            method: method.name().to_string(),
                            seed,
                            status: format!("scenario failed: {e}"),
                            best_y: None,
                            y_opt: f64::NAN,
                            final_re: None,
                            re_at_50: None,
                            evaluations: 0,
                            constraint_violations: 0,
                            kl_source_target: f64::NAN,
                            wall_time_s: 0.0,
                            trajectory: Vec::new(),
                            hamming: Vec::new(),
                        });
                    }
                }
                continue;
            }
        };
        for method in methods {
            for seed in 0..seeds {
                let start = Instant::now();
                let outcome = run_cell(&prepared, scenario, *method, seed);
                let wall = start.elapsed().as_secs_f64();
                let cell = match outcome {
                    Ok((best_y, best_config, trajectory, evaluations, hamming)) => {
                        let final_re = best_y
                            .and_then(|y| relative_error(y, prepared.y_opt).ok());
                        let re_at_50 = trajectory
                            .get(49.min(trajectory.len().saturating_sub(1)))
                            .copied()
                            .flatten()
                            .and_then(|y| relative_error(y, prepared.y_opt).ok());
                        let violations =
                            noise_free_violations(&prepared.target_env, &prepared.query, &best_config);
                        Cell {
                            scenario: scenario.name.clone(),
                            method: method.name().to_string(),
                            seed,
                            status: "ok".into(),
                            best_y,
                            y_opt: prepared.y_opt,
                            final_re,
                            re_at_50,
                            evaluations,
                            constraint_violations: violations,
                            kl_source_target: prepared.kl,
                            wall_time_s: wall,
                            trajectory,
                            hamming,
                        }
                    }
                    Err(e) => Cell {
                        scenario: scenario.name.clone(),
                        method: method.name().to_string(),
                        seed,
                        status: format!("failed: {e}"),
                        best_y: None,
                        y_opt: prepared.y_opt,
                        final_re: None,
                        re_at_50: None,
                        evaluations: 0,
                        constraint_violations: 0,
                        kl_source_target: prepared.kl,
                        wall_time_s: wall,
                        trajectory: Vec::new(),
                        hamming: Vec::new(),
                    },
                };
                cells.push(cell);
            }
        }
    }

    let report = BenchmarkReport {
        report_version: REPORT_VERSION,
        suite: suite.name.clone(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        seeds,
        cells,
    };
    write_outputs(&report, suite, out_dir)?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_outputs(report: &BenchmarkReport, suite: &Suite, out_dir: &Path) -> Result<(), SimError> {
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(report)?)?;

    let mut summary = String::from(
        "scenario,method,seed,status,best_y,y_opt,final_re,re_at_50,evaluations,constraint_violations,kl_source_target\n",
    );
    for c in &report.cells {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.scenario,
            c.method,
            c.seed,
            if c.status == "ok" { "ok" } else { "failed" },
            fmt_opt(c.best_y),
            if c.y_opt.is_nan() { String::new() } else { c.y_opt.to_string() },
            fmt_opt(c.final_re),
            fmt_opt(c.re_at_50),
            c.evaluations,
            c.constraint_violations,
            if c.kl_source_target.is_nan() {
                String::new()
            } else {
                c.kl_source_target.to_string()
            },
        ));
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;

    let mut trajectories = String::from("scenario,method,seed,iteration,best_y\n");
    for c in &report.cells {
        for (i, y) in c.trajectory.iter().enumerate() {
            trajectories.push_str(&format!(
                "{},{},{},{},{}\n",
                c.scenario,
                c.method,
                c.seed,
                i + 1,
                fmt_opt(*y)
            ));
        }
    }
    std::fs::write(out_dir.join("trajectories.csv"), trajectories)?;

    let mut hamming = String::from("scenario,seed,iteration,target,source_only,combined\n");
    for c in &report.cells {
        for h in &c.hamming {
            let source_only =
                if h.source_only == usize::MAX { String::new() } else { h.source_only.to_string() };
            hamming.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.scenario, c.seed, h.iteration, h.target, source_only, h.combined
            ));
        }
    }
    std::fs::write(out_dir.join("hamming.csv"), hamming)?;

    for scenario in &suite.scenarios {
        write_scenario_plots(report, &scenario.name, out_dir)?;
    }
    Ok(())
}

fn median_trajectory(cells: &[&Cell]) -> Vec<(f64, f64)> {
    let len = cells.iter().map(|c| c.trajectory.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for i in 0..len {
        let ys: Vec<f64> = cells
            .iter()
            .filter_map(|c| c.trajectory.get(i).copied().flatten())
            .collect();
        if !ys.is_empty() {
            out.push(((i + 1) as f64, lower_median(&ys)));
        }
    }
    out
}

fn write_scenario_plots(
    report: &BenchmarkReport,
    scenario: &str,
    out_dir: &Path,
) -> Result<(), SimError> {
    let mut series = Vec::new();
    for method in &report.methods {
        let cells: Vec<&Cell> = report
            .cells
            .iter()
            .filter(|c| c.scenario == scenario && &c.method == method && c.status == "ok")
            .collect();
        if cells.is_empty() {
            continue;
        }
        series.push(Series {
            label: method.clone(),
            points: median_trajectory(&cells),
        });
    }
    if !series.is_empty() {
        let svg = plot::line_chart(
            &format!("{scenario}: best objective by iteration"),
            "iteration",
            "best objective",
            &series,
        );
        std::fs::write(out_dir.join("plots").join(format!("{scenario}_objective.svg")), svg)?;
    }

    let cameo_cells: Vec<&Cell> = report
        .cells
        .iter()
        .filter(|c| c.scenario == scenario && c.method == "cameo" && !c.hamming.is_empty())
        .collect();
    if !cameo_cells.is_empty() {
        let mut iterations: Vec<u32> = cameo_cells
            .iter()
            .flat_map(|c| c.hamming.iter().map(|h| h.iteration))
            .collect();
        iterations.sort_unstable();
        iterations.dedup();
        let median_of = |pick: &dyn Fn(&HammingPoint) -> Option<f64>| -> Vec<(f64, f64)> {
            iterations
                .iter()
                .filter_map(|it| {
                    let vals: Vec<f64> = cameo_cells
                        .iter()
                        .filter_map(|c| {
                            c.hamming.iter().find(|h| h.iteration == *it).and_then(|h| pick(h))
                        })
                        .collect();
                    if vals.is_empty() {
                        None
                    } else {
                        Some((*it as f64, lower_median(&vals)))
                    }
                })
                .collect()
        };
        let series = vec![
            Series { label: "target model".into(), points: median_of(&|h| Some(h.target as f64)) },
            Series {
                label: "source only".into(),
                points: median_of(&|h| {
                    if h.source_only == usize::MAX { None } else { Some(h.source_only as f64) }
                }),
            },
            Series { label: "combined".into(), points: median_of(&|h| Some(h.combined as f64)) },
        ];
        let svg = plot::line_chart(
            &format!("{scenario}: structural distance to ground truth"),
            "iteration",
            "Hamming distance",
            &series,
        );
        std::fs::write(out_dir.join("plots").join(format!("{scenario}_hamming.svg")), svg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("cameo").unwrap(), Method::Cameo);
        assert_eq!(Method::parse("cold-gp-ei").unwrap(), Method::ColdGpEi);
        assert_eq!(Method::parse("random").unwrap(), Method::Random);
        assert!(Method::parse("smac").is_err());
    }

    #[test]
    fn combine_prefers_target_marks() {
        use cameo_core::graph::{Mark, Node, NodeRole, Stage};
        let nodes = vec![
            Node { name: "a".into(), role: NodeRole::Option },
            Node { name: "b".into(), role: NodeRole::Event },
            Node { name: "c".into(), role: NodeRole::Objective },
        ];
        let mut source = MixedGraph::new(nodes.clone(), Stage::Admg);
        source.set_edge(0, 1, Mark::Tail, Mark::Arrow);
        source.set_edge(0, 2, Mark::Tail, Mark::Arrow);
        let mut target = MixedGraph::new(nodes, Stage::Admg);
        target.set_edge(0, 1, Mark::Arrow, Mark::Arrow); // disagrees with source
        let combined = combine_graphs(&source, &target);
        assert_eq!(combined.edge(0, 1), Some((Mark::Arrow, Mark::Arrow)));
        assert_eq!(combined.edge(0, 2), Some((Mark::Tail, Mark::Arrow))); // source fills gap
    }
}
