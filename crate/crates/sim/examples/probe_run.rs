use cameo_core::optimizer::{self, Direction, Query, RunOptions};
use cameo_sim::baselines;
use cameo_sim::{build_env, shift_env, ShiftSpec};
use std::path::Path;
use std::time::Instant;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let env = build_env(&root.join("envs/sandbox.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/sandbox_medium.json")).unwrap(),
    )
    .unwrap();
    let target = shift_env(&env, &shift).unwrap();
    let (_, y_opt) = target.ground_truth("latency", 11).unwrap();
    println!("target optimum: {y_opt:.4}");

    let t0 = Instant::now();
    let source = env.observe(2000, 5, 1).unwrap();
    println!("source data built in {:?} ({} records)", t0.elapsed(), source.len());

    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(60),
        budget_seconds: None,
        constraints: vec![],
    };

    for seed in [0u64, 1] {
        let t = Instant::now();
        let options = RunOptions { seed, convergence_window: 0, ..RunOptions::default() };
        match optimizer::run(query.clone(), &source, &cameo_sim::env::MedianRepeatEvaluator::new(&target, 5), options) {
            Ok(res) => {
                let tr = res.best_trajectory();
                let best50 = tr.get(49).copied().flatten();
                println!(
                    "cameo seed {seed}: best {:?} at50 {:?} evals {} time {:?} warnings {:?}",
                    res.best_y, best50, res.evaluations, t.elapsed(), res.warnings
                );
            }
            Err(e) => println!("cameo seed {seed} FAILED: {e}"),
        }
        let t = Instant::now();
        match baselines::run_cold_gp_ei(&target, query.clone(), 10, seed, 5) {
            Ok(res) => {
                let tr = res.best_trajectory();
                let best50 = tr.get(49).copied().flatten();
                println!(
                    "cold  seed {seed}: best {:?} at50 {:?} evals {} time {:?}",
                    res.best_y, best50, res.evaluations, t.elapsed()
                );
            }
            Err(e) => println!("cold seed {seed} FAILED: {e}"),
        }
    }
}
