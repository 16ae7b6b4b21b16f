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
        budget_iterations: Some(100),
        budget_seconds: None,
        constraints: vec![],
    };
    let re = |y: f64| (y - y_opt).abs() / y_opt.abs() * 100.0;
    let eval5 = MedianRepeatEvaluator::new(&target, 5);

    for (label, eps, l_alpha) in [
        ("default        ", None, 0.1),
        ("no-observations", Some(0.0), 0.1),
        ("wide-gate l=0.3", Some(0.0), 0.3),
        ("all-cold  l=1.0", Some(0.0), 1.0),
    ] {
        let mut at25 = Vec::new();
        let mut at50 = Vec::new();
        let mut at100 = Vec::new();
        for seed in 0..4u64 {
            let options = RunOptions {
                seed,
                convergence_window: 0,
                epsilon_override: eps,
                l_alpha,
                ..RunOptions::default()
            };
            let res = optimizer::run(query.clone(), &source, &eval5, options).unwrap();
            let tr = res.best_trajectory();
            let at = |i: usize| tr.get(i - 1).copied().flatten().map(re).unwrap_or(f64::NAN);
            at25.push(at(25));
            at50.push(at(50));
            at100.push(at(100));
        }
        let med = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.total_cmp(b));
            v[v.len() / 2 - 1]
        };
        println!(
            "{label}: RE@25 {:.2} RE@50 {:.2} RE@100 {:.2}",
            med(&mut at25), med(&mut at50), med(&mut at100)
        );
    }
}
