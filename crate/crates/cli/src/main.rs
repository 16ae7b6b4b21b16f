//! Command line for the causal transfer optimizer and its benchmark harness.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags, schema
//! mismatches, unknown names), 1 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cameo_core::data::Dataset;
use cameo_core::discovery;
use cameo_core::optimizer::{self, Constraint, Direction, Query, RunOptions};
use cameo_core::space::ConfigurationSpace;
use cameo_sim::bench::{self, Method};

#[derive(Parser)]
#[command(name = "cameo", about = "Causal transfer optimization of configurable systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a causal performance model from a measurement CSV.
    Discover {
        /// Measurement CSV (schema column order plus a provenance column).
        #[arg(long)]
        data: PathBuf,
        /// Configuration-space schema JSON.
        #[arg(long)]
        schema: PathBuf,
        /// Significance level for the independence tests.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Maximum conditioning-set size (-1 = unlimited).
        #[arg(long, default_value_t = -1)]
        max_depth: i32,
        /// Output graph JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a target environment warm-started from source measurements.
    Optimize {
        /// Configuration-space schema JSON.
        #[arg(long)]
        schema: PathBuf,
        /// Source measurement CSV.
        #[arg(long)]
        source: PathBuf,
        /// Target environment spec JSON (simulated system).
        #[arg(long)]
        target_env: PathBuf,
        /// Objective name to minimize.
        #[arg(long)]
        objective: String,
        /// Maximize instead of minimize.
        #[arg(long)]
        maximize: bool,
        /// Iteration budget.
        #[arg(long)]
        budget: Option<u32>,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        budget_seconds: Option<f64>,
        /// Constraint of the form `<name><=bound` or `<name>>=bound`;
        /// repeatable.
        #[arg(long = "constraint")]
        constraints: Vec<String>,
        /// Random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of initial uniform target samples.
        #[arg(long, default_value_t = 10)]
        initial_samples: usize,
        /// Skip the source-model refinement step.
        #[arg(long)]
        no_refine: bool,
        /// Run directory for history, state, traces, and graphs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark suite and emit a report.
    Bench {
        /// Suite JSON file.
        #[arg(long)]
        suite: PathBuf,
        /// Comma-separated methods: cameo,cold-gp-ei,random.
        #[arg(long, default_value = "cameo,cold-gp-ei,random")]
        methods: String,
        /// Number of seeds per cell.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Configuration errors (bad inputs, schema mismatches) exit with code 2.
fn is_config_error(e: &anyhow::Error) -> bool {
    for cause in e.chain() {
        if cause.is::<cameo_core::space::SpaceError>()
            || cause.is::<cameo_core::data::DataError>()
            || cause.is::<cameo_core::optimizer::OptimizerError>()
            || cause.is::<cameo_sim::SimError>()
        {
            return true;
        }
    }
    false
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Discover { data, schema, alpha, max_depth, out } => {
            let dataset = Dataset::load_csv(&data, &schema)
                .with_context(|| format!("loading {}", data.display()))?;
            let graph = discovery::learn_cpm_with_depth(&dataset, alpha, max_depth)
                .context("structure discovery")?;
            std::fs::write(&out, graph.to_json())
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "discovered {} edges over {} nodes -> {}",
                graph.edge_count(),
                graph.node_count(),
                out.display()
            );
            Ok(())
        }
        Command::Optimize {
            schema,
            source,
            target_env,
            objective,
            maximize,
            budget,
            budget_seconds,
            constraints,
            seed,
            initial_samples,
            no_refine,
            out,
        } => {
            let space = ConfigurationSpace::from_schema_file(&schema)
                .with_context(|| format!("loading {}", schema.display()))?;
            let source_data = Dataset::load_csv_with_space(&source, space.clone())
                .with_context(|| format!("loading {}", source.display()))?;
            let env = cameo_sim::build_env(&target_env, seed)
                .with_context(|| format!("loading {}", target_env.display()))?;
            if env.space != space {
                anyhow::bail!(cameo_core::space::SpaceError::DuplicateName(
                    "schema and target environment disagree".into()
                ));
            }
            if budget.is_none() && budget_seconds.is_none() {
                return Err(optimizer::OptimizerError::NoBudget.into());
            }
            let mut parsed = Vec::new();
            for text in &constraints {
                parsed.push(Constraint::parse(text, &space)?);
            }
            if !space.objectives.iter().any(|o| o == &objective) {
                return Err(optimizer::OptimizerError::UnknownObjective(objective).into());
            }
            let query = Query {
                objective,
                direction: if maximize { Direction::Maximize } else { Direction::Minimize },
                budget_iterations: budget,
                budget_seconds,
                constraints: parsed,
            };
            let options = RunOptions {
                seed,
                initial_samples,
                refine: !no_refine,
                run_dir: Some(out.clone()),
                ..RunOptions::default()
            };
            let result = optimizer::run(query, &source_data, &env, options)?;
            for warning in &result.warnings {
                eprintln!("warning: {warning}");
            }
            match (&result.best_config, result.best_y) {
                (Some(cfg), Some(y)) => {
                    println!("best objective {y} after {} evaluations", result.evaluations);
                    println!("best configuration: {}", cfg.canonical_key());
                }
                _ => println!("no feasible configuration found"),
            }
            println!("run artifacts in {}", out.display());
            Ok(())
        }
        Command::Bench { suite, methods, seeds, out } => {
            let methods: Vec<Method> = methods
                .split(',')
                .filter(|s| !s.is_empty())
                .map(Method::parse)
                .collect::<Result<_, _>>()?;
            let report = bench::run_benchmark(&suite, &methods, seeds, &out)?;
            let ok = report.cells.iter().filter(|c| c.status == "ok").count();
            println!(
                "benchmark `{}`: {}/{} cells ok -> {}",
                report.suite,
                ok,
                report.cells.len(),
                out.display()
            );
            Ok(())
        }
    }
}
