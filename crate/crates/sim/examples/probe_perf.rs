use cameo_core::optimizer::{self, Direction, Query, RunOptions};
use cameo_sim::baselines;
use cameo_sim::{build_env, shift_env, ShiftSpec};
use std::path::Path;
use std::time::Instant;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let env = build_env(&root.join("envs/perf_stack.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/perf_stack_medium.json")).unwrap(),
    )
    .unwrap();
    let target = shift_env(&env, &shift).unwrap();
    let t0 = Instant::now();
    let (gt_cfg, y_opt) = target.ground_truth_auto("latency", 7).unwrap();
    println!("target optimum: {y_opt:.4} ({:?}) in {:?}", gt_cfg.canonical_key(), t0.elapsed());

    let t0 = Instant::now();
    let source = env.observe(2000, 5, 1).unwrap();
    println!("source built in {:?}", t0.elapsed());

    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(120),
        budget_seconds: None,
        constraints: vec![],
    };

    let re = |y: f64| (y - y_opt).abs() / y_opt.abs() * 100.0;
    for seed in [0u64, 1, 2] {
        let t = Instant::now();
        let options = RunOptions { seed, convergence_window: 0, ..RunOptions::default() };
        match optimizer::run(query.clone(), &source, &cameo_sim::env::MedianRepeatEvaluator::new(&target, 5), options) {
            Ok(res) => {
                let tr = res.best_trajectory();
                let at = |i: usize| tr.get(i - 1).copied().flatten().map(re);
                println!(
                    "cameo seed {seed}: RE@10 {:?} RE@25 {:?} RE@50 {:?} RE@120 {:?} time {:?} warn {}",
                    at(10), at(25), at(50), at(120), t.elapsed(), res.warnings.len()
                );
                for w in &res.warnings { println!("   warn: {w}"); }
            }
            Err(e) => println!("cameo seed {seed} FAILED: {e}"),
        }
        let t = Instant::now();
        match baselines::run_cold_gp_ei(&target, query.clone(), 10, seed, 5) {
            Ok(res) => {
                let tr = res.best_trajectory();
                let at = |i: usize| tr.get(i - 1).copied().flatten().map(re);
                println!(
                    "cold  seed {seed}: RE@10 {:?} RE@25 {:?} RE@50 {:?} RE@120 {:?} time {:?}",
                    at(10), at(25), at(50), at(120), t.elapsed()
                );
            }
            Err(e) => println!("cold seed {seed} FAILED: {e}"),
        }
    }
}
