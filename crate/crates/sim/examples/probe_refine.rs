use cameo_core::optimizer::{self, Direction, Query, RunOptions};
use cameo_sim::env::MedianRepeatEvaluator;
use cameo_sim::{build_env, shift_env, ShiftSpec};
use std::path::Path;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let env = build_env(&root.join("envs/perf_stack.json"), 42).unwrap();
    let shift: ShiftSpec = serde_json::from_str(
        &std::fs::read_to_string(root.join("shifts/perf_stack_medium.json")).unwrap(),
    )
    .unwrap();
    let target = shift_env(&env, &shift).unwrap();
    let (_, y_opt) = target.ground_truth_auto("latency", 7).unwrap();
    let source = env.observe(2000, 5, 1).unwrap();
    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(120),
        budget_seconds: None,
        constraints: vec![],
    };
    let eval5 = MedianRepeatEvaluator::new(&target, 5);
    let re = |y: f64| (y - y_opt).abs() / y_opt.abs() * 100.0;
    let iters_to = |tr: &[Option<f64>], thresh: f64| -> usize {
        for (i, y) in tr.iter().enumerate() {
            if let Some(y) = y {
                if re(*y) <= thresh {
                    return i + 1;
                }
            }
        }
        tr.len() + 1
    };

    for refine in [true, false] {
        let mut to10 = Vec::new();
        for seed in 0..10u64 {
            let options = RunOptions {
                seed,
                convergence_window: 0,
                refine,
                ..RunOptions::default()
            };
            let res = optimizer::run(query.clone(), &source, &eval5, options).unwrap();
            let tr = res.best_trajectory();
            to10.push(iters_to(&tr, 10.0));
        }
        to10.sort_unstable();
        println!("refine={refine}: iterations-to-RE<=10 {:?} median {}", to10, to10[4]);
    }
}
