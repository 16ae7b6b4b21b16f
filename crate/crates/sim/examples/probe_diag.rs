use cameo_core::optimizer::{self, Direction, Query, RunOptions};
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
    let source = env.observe(2000, 5, 1).unwrap();
    let query = Query {
        objective: "latency".into(),
        direction: Direction::Minimize,
        budget_iterations: Some(120),
        budget_seconds: None,
        constraints: vec![],
    };
    let options = RunOptions {
        seed: 0,
        convergence_window: 0,
        run_dir: Some("/tmp/diag_run".into()),
        ..RunOptions::default()
    };
    let res = optimizer::run(query, &source, &target, options).unwrap();
    println!("best {:?}, obs/int split: ", res.best_y);
    let mut obs = 0;
    let mut int = 0;
    for r in &res.history {
        if r.iteration > 0 {
            match &r.provenance {
                cameo_core::data::Provenance::Observational => obs += 1,
                cameo_core::data::Provenance::Interventional(_) => int += 1,
            }
        }
    }
    println!("observations {obs} interventions {int}");
    if let Some(ace) = &res.source_ace {
        println!("source ACE table:");
        for (name, score) in &ace.scores {
            println!("  {name}: {score:.4}");
        }
    }
    if let Some(g) = &res.source_graph_refined {
        println!("refined source graph nodes: {:?}", g.nodes.iter().map(|n| n.name.as_str()).collect::<Vec<_>>());
    }
}
